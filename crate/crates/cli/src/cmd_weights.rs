//! Checkpoint-arithmetic subcommands: merge, stitch, swap, and the
//! delta-geometry reports.

use crate::errors::CliError;
use crate::report::{fmt_f64, provenance, write_csv};
use frontier_core::arith::{self, LayerMap, NonLayerPolicy};
use frontier_core::geometry;
use frontier_core::store::{load_checkpoint, save_checkpoint, Checkpoint};
use std::path::{Path, PathBuf};

#[derive(clap::Args, Debug)]
pub struct MergeArgs {
    #[arg(long)]
    pub low: PathBuf,
    #[arg(long)]
    pub high: PathBuf,
    /// Interpolation coefficient; values outside [0,1] extrapolate.
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn merge(args: &MergeArgs) -> Result<(), CliError> {
    let low = load_checkpoint(&args.low)?;
    let high = load_checkpoint(&args.high)?;
    let mut merged = arith::lerp(&low, &high, args.alpha)?;
    merged
        .metadata
        .insert("merge.low".into(), args.low.display().to_string());
    merged
        .metadata
        .insert("merge.high".into(), args.high.display().to_string());
    save_checkpoint(&merged, &args.out).map_err(CliError::infra)?;
    let spec = arith::MergeSpec {
        alpha: args.alpha,
        low_id: args.low.display().to_string(),
        high_id: args.high.display().to_string(),
    };
    println!(
        "{} ({}) -> {}",
        spec.regime(),
        args.alpha,
        args.out.display()
    );
    Ok(())
}

fn parse_policy(name: &str) -> Result<NonLayerPolicy, CliError> {
    match name {
        "from-base" => Ok(NonLayerPolicy::FromBase),
        "from-low" => Ok(NonLayerPolicy::FromLow),
        "from-high" => Ok(NonLayerPolicy::FromHigh),
        other => Err(CliError::Usage(format!(
            "unknown non-layer policy {other}; use from-base, from-low, or from-high"
        ))),
    }
}

fn build_map(
    pattern: &str,
    layers: Option<usize>,
    policy: &str,
    ckpt: &Checkpoint,
) -> Result<LayerMap, CliError> {
    let count = match layers {
        Some(n) => n,
        None => LayerMap::infer_layer_count(pattern, ckpt)?,
    };
    if count == 0 {
        return Err(CliError::Data(format!(
            "layer pattern {pattern} matches no tensors"
        )));
    }
    Ok(LayerMap::new(pattern, count, parse_policy(policy)?)?)
}

#[derive(clap::Args, Debug)]
pub struct StitchArgs {
    #[arg(long)]
    pub low: PathBuf,
    #[arg(long)]
    pub high: PathBuf,
    /// Layers below the cutpoint come from the high endpoint.
    #[arg(long)]
    pub cutpoint: usize,
    #[arg(long = "layer-pattern")]
    pub layer_pattern: String,
    /// Layer count; inferred from tensor names when omitted.
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long = "non-layer", default_value = "from-base")]
    pub non_layer: String,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn stitch(args: &StitchArgs) -> Result<(), CliError> {
    let low = load_checkpoint(&args.low)?;
    let high = load_checkpoint(&args.high)?;
    let map = build_map(&args.layer_pattern, args.layers, &args.non_layer, &low)?;
    let out = arith::stitch(&low, &high, args.cutpoint, &map)?;
    save_checkpoint(&out, &args.out).map_err(CliError::infra)?;
    println!(
        "stitched cutpoint {} of {} layers -> {}",
        args.cutpoint,
        map.layer_count,
        args.out.display()
    );
    Ok(())
}

#[derive(clap::Args, Debug)]
pub struct SwapArgs {
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long)]
    pub donor: PathBuf,
    /// Inclusive layer range lo:hi taken from the donor.
    #[arg(long)]
    pub range: String,
    #[arg(long = "layer-pattern")]
    pub layer_pattern: String,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long = "non-layer", default_value = "from-base")]
    pub non_layer: String,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn swap(args: &SwapArgs) -> Result<(), CliError> {
    let (lo, hi) = args
        .range
        .split_once(':')
        .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
        .ok_or_else(|| CliError::Usage(format!("bad --range {:?}; expected lo:hi", args.range)))?;
    let base = load_checkpoint(&args.base)?;
    let donor = load_checkpoint(&args.donor)?;
    let map = build_map(&args.layer_pattern, args.layers, &args.non_layer, &base)?;
    let out = arith::block_swap(&base, &donor, lo, hi, &map)?;
    save_checkpoint(&out, &args.out).map_err(CliError::infra)?;
    println!("swapped layers {lo}..={hi} -> {}", args.out.display());
    Ok(())
}

#[derive(clap::Subcommand, Debug)]
pub enum GeomCmd {
    /// Singular-value spectra of every matrix tensor in a delta checkpoint.
    Svd {
        #[arg(long)]
        delta: PathBuf,
        /// Optional pattern with one capture labeling each tensor's
        /// component group in the output.
        #[arg(long = "group-pattern")]
        group_pattern: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-layer fraction of total squared change.
    Varratio {
        #[arg(long)]
        delta: PathBuf,
        #[arg(long = "layer-pattern")]
        layer_pattern: String,
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn geom(cmd: &GeomCmd) -> Result<(), CliError> {
    match cmd {
        GeomCmd::Svd {
            delta,
            group_pattern,
            out,
        } => geom_svd(delta, group_pattern.as_deref(), out),
        GeomCmd::Varratio {
            delta,
            layer_pattern,
            layers,
            out,
        } => geom_varratio(delta, layer_pattern, *layers, out),
    }
}

fn geom_svd(delta: &Path, group_pattern: Option<&str>, out: &Path) -> Result<(), CliError> {
    let ckpt = load_checkpoint(delta)?;
    let grouper = match group_pattern {
        Some(p) => Some(regex::Regex::new(p).map_err(|e| CliError::Usage(e.to_string()))?),
        None => None,
    };
    let mut rows = Vec::new();
    for tensor in ckpt.iter() {
        let Some((rows_n, cols_n)) = geometry::as_matrix_shape(&tensor.shape) else {
            continue;
        };
        let values = tensor.to_f64_vec();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Data(format!(
                "tensor {} contains non-finite entries",
                tensor.name
            )));
        }
        let spectrum = geometry::spectrum_of(rows_n, cols_n, &values);
        let group = grouper
            .as_ref()
            .and_then(|g| g.captures(&tensor.name))
            .and_then(|c| c.get(1))
            .map(|m| m.as_str().to_string())
            .unwrap_or_else(|| "all".to_string());
        for k in 1..=spectrum.rank {
            let cumvar = geometry::cumulative_variance(&spectrum, k)?;
            rows.push(format!(
                "{},{},{},{},{},{},{}",
                tensor.name,
                group,
                spectrum.rank,
                k,
                fmt_f64(k as f64 / spectrum.rank as f64),
                fmt_f64(spectrum.singular_values[k - 1]),
                fmt_f64(cumvar)
            ));
        }
    }
    let params = format!("geom-svd delta={}", delta.display());
    write_csv(
        out,
        &provenance(&params, "", None),
        &[],
        "tensor,group,rank,top_k,rank_fraction,sigma,cumulative_variance",
        &rows,
    )
}

fn geom_varratio(
    delta: &Path,
    layer_pattern: &str,
    layers: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let ckpt = load_checkpoint(delta)?;
    let map = build_map(layer_pattern, layers, "from-base", &ckpt)?;
    let profile = geometry::layer_variance_ratio(&ckpt, &map)?;
    let rows: Vec<String> = profile
        .per_layer_fraction
        .iter()
        .zip(&profile.per_layer_sq)
        .enumerate()
        .map(|(layer, (frac, sq))| format!("{layer},{},{}", fmt_f64(*sq), fmt_f64(*frac)))
        .collect();
    let mut metadata = vec![format!("total_sq={}", fmt_f64(profile.total_sq))];
    if !profile.excluded.is_empty() {
        metadata.push(format!("excluded={}", profile.excluded.join(";")));
    }
    let params = format!(
        "geom-varratio delta={} pattern={layer_pattern}",
        delta.display()
    );
    write_csv(
        out,
        &provenance(&params, "", None),
        &metadata,
        "layer,sum_sq,fraction",
        &rows,
    )
}
