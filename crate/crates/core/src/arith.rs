//! Linear weight averaging (interpolation and extrapolation) and
//! layer-level recombination of compatible checkpoints.
//!
//! All arithmetic accumulates in `f64` and emits `F32`; BF16 inputs are
//! upcast in memory only. Stitching and block swaps copy tensors verbatim.

use crate::store::{validate_compat, Checkpoint, CompatReport, Tensor};
use regex::Regex;

#[derive(Debug, thiserror::Error)]
pub enum ArithError {
    #[error("checkpoints are incompatible:\n{0}")]
    Incompatible(CompatReport),
    #[error("non-finite interpolation coefficient: {0}")]
    NonFiniteAlpha(f64),
    #[error("invalid layer pattern {pattern}: {reason}")]
    BadPattern { pattern: String, reason: String },
    #[error("tensor {name} maps to layer {layer}, outside 0..{layer_count}")]
    LayerOutOfRange {
        name: String,
        layer: usize,
        layer_count: usize,
    },
    #[error("cutpoint {cutpoint} out of range 0..={layer_count}")]
    CutpointOutOfRange { cutpoint: usize, layer_count: usize },
    #[error("layer range {lo}:{hi} invalid for {layer_count} layers")]
    RangeOutOfRange {
        lo: usize,
        hi: usize,
        layer_count: usize,
    },
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
}

/// Where tensors that belong to no layer (embeddings, final norms) are
/// taken from during stitching and block swaps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NonLayerPolicy {
    /// The base of the operation: `low` for stitch, `base` for block_swap.
    #[default]
    FromBase,
    FromLow,
    FromHigh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSlot {
    Layer(usize),
    NonLayer,
}

/// Maps tensor names to layer indices through a pattern with one integer
/// capture group. Names that do not match are NonLayer.
#[derive(Debug, Clone)]
pub struct LayerMap {
    pattern: Regex,
    pub layer_count: usize,
    pub non_layer_policy: NonLayerPolicy,
}

impl LayerMap {
    pub fn new(
        pattern: &str,
        layer_count: usize,
        non_layer_policy: NonLayerPolicy,
    ) -> Result<Self, ArithError> {
        let regex = Regex::new(pattern).map_err(|e| ArithError::BadPattern {
            pattern: pattern.to_string(),
            reason: e.to_string(),
        })?;
        if regex.captures_len() < 2 {
            return Err(ArithError::BadPattern {
                pattern: pattern.to_string(),
                reason: "pattern needs one capture group for the layer index".into(),
            });
        }
        Ok(LayerMap {
            pattern: regex,
            layer_count,
            non_layer_policy,
        })
    }

    /// Largest captured layer index plus one, for inferring `layer_count`.
    pub fn infer_layer_count(pattern: &str, ckpt: &Checkpoint) -> Result<usize, ArithError> {
        let regex = Regex::new(pattern).map_err(|e| ArithError::BadPattern {
            pattern: pattern.to_string(),
            reason: e.to_string(),
        })?;
        let mut max_seen: Option<usize> = None;
        for name in ckpt.names() {
            if let Some(caps) = regex.captures(name) {
                if let Some(m) = caps.get(1) {
                    let idx: usize = m.as_str().parse().map_err(|_| ArithError::BadPattern {
                        pattern: pattern.to_string(),
                        reason: format!("capture {:?} is not an integer", m.as_str()),
                    })?;
                    max_seen = Some(max_seen.map_or(idx, |m0| m0.max(idx)));
                }
            }
        }
        Ok(max_seen.map_or(0, |m| m + 1))
    }

    pub fn slot(&self, name: &str) -> Result<LayerSlot, ArithError> {
        match self.pattern.captures(name) {
            None => Ok(LayerSlot::NonLayer),
            Some(caps) => {
                let m = caps.get(1).ok_or_else(|| ArithError::BadPattern {
                    pattern: self.pattern.as_str().to_string(),
                    reason: "capture group 1 did not participate in the match".into(),
                })?;
                let layer: usize = m.as_str().parse().map_err(|_| ArithError::BadPattern {
                    pattern: self.pattern.as_str().to_string(),
                    reason: format!("capture {:?} is not an integer", m.as_str()),
                })?;
                if layer >= self.layer_count {
                    return Err(ArithError::LayerOutOfRange {
                        name: name.to_string(),
                        layer,
                        layer_count: self.layer_count,
                    });
                }
                Ok(LayerSlot::Layer(layer))
            }
        }
    }
}

/// An interpolation request between two endpoint checkpoints.
/// `alpha` inside the unit interval is interpolation; anything else is
/// extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeSpec {
    pub alpha: f64,
    pub low_id: String,
    pub high_id: String,
}

impl MergeSpec {
    pub fn is_interpolation(&self) -> bool {
        (0.0..=1.0).contains(&self.alpha)
    }

    pub fn regime(&self) -> &'static str {
        if self.is_interpolation() {
            "interpolation"
        } else {
            "extrapolation"
        }
    }
}

fn require_compat(a: &Checkpoint, b: &Checkpoint) -> Result<(), ArithError> {
    let report = validate_compat(a, b);
    if report.is_empty() {
        Ok(())
    } else {
        Err(ArithError::Incompatible(report))
    }
}

fn zip_elementwise(
    a: &Checkpoint,
    b: &Checkpoint,
    mut f: impl FnMut(f64, f64) -> f64,
) -> Checkpoint {
    let mut out = Checkpoint::new();
    for ta in a.iter() {
        let tb = b.get(&ta.name).expect("compat validated");
        let va = ta.to_f64_vec();
        let vb = tb.to_f64_vec();
        let values: Vec<f32> = va
            .iter()
            .zip(vb.iter())
            .map(|(&x, &y)| f(x, y) as f32)
            .collect();
        out.insert(Tensor::from_f32(ta.name.clone(), ta.shape.clone(), &values))
            .expect("names unique in source");
    }
    out
}

/// Elementwise `alpha * b + (1 - alpha) * a`, accumulated in `f64`,
/// emitted as `F32`. Output metadata records the coefficient and the
/// endpoint identifiers (each checkpoint's `id` metadata when present).
pub fn lerp(a: &Checkpoint, b: &Checkpoint, alpha: f64) -> Result<Checkpoint, ArithError> {
    if !alpha.is_finite() {
        return Err(ArithError::NonFiniteAlpha(alpha));
    }
    require_compat(a, b)?;
    let mut out = zip_elementwise(a, b, |x, y| alpha * y + (1.0 - alpha) * x);
    out.metadata
        .insert("merge.alpha".into(), format!("{alpha}"));
    out.metadata.insert(
        "merge.low".into(),
        a.metadata.get("id").cloned().unwrap_or_default(),
    );
    out.metadata.insert(
        "merge.high".into(),
        b.metadata.get("id").cloned().unwrap_or_default(),
    );
    Ok(out)
}

/// Elementwise difference `b - a`, emitted as `F32`.
pub fn delta(a: &Checkpoint, b: &Checkpoint) -> Result<Checkpoint, ArithError> {
    require_compat(a, b)?;
    Ok(zip_elementwise(a, b, |x, y| y - x))
}

fn recombine(
    primary: &Checkpoint,
    secondary: &Checkpoint,
    map: &LayerMap,
    mut take_secondary: impl FnMut(usize) -> bool,
    non_layer_from_secondary: bool,
) -> Result<Checkpoint, ArithError> {
    let mut out = Checkpoint::new();
    for tp in primary.iter() {
        let source = match map.slot(&tp.name)? {
            LayerSlot::Layer(idx) => {
                if take_secondary(idx) {
                    secondary.get(&tp.name).expect("compat validated")
                } else {
                    tp
                }
            }
            LayerSlot::NonLayer => {
                if non_layer_from_secondary {
                    secondary.get(&tp.name).expect("compat validated")
                } else {
                    tp
                }
            }
        };
        out.insert(source.clone()).expect("names unique in source");
    }
    Ok(out)
}

/// Layers `0..cutpoint` from `high`, the rest from `low`. NonLayer tensors
/// follow `map.non_layer_policy`, with FromBase meaning `low`.
pub fn stitch(
    low: &Checkpoint,
    high: &Checkpoint,
    cutpoint: usize,
    map: &LayerMap,
) -> Result<Checkpoint, ArithError> {
    require_compat(low, high)?;
    if cutpoint > map.layer_count {
        return Err(ArithError::CutpointOutOfRange {
            cutpoint,
            layer_count: map.layer_count,
        });
    }
    let non_layer_from_high = matches!(map.non_layer_policy, NonLayerPolicy::FromHigh);
    recombine(
        low,
        high,
        map,
        |layer| layer < cutpoint,
        non_layer_from_high,
    )
}

/// Layers in `lo..=hi` from `donor`, everything else from `base`.
/// NonLayer tensors follow FromBase (the base) unless overridden.
pub fn block_swap(
    base: &Checkpoint,
    donor: &Checkpoint,
    lo: usize,
    hi: usize,
    map: &LayerMap,
) -> Result<Checkpoint, ArithError> {
    require_compat(base, donor)?;
    if lo > hi || hi >= map.layer_count {
        return Err(ArithError::RangeOutOfRange {
            lo,
            hi,
            layer_count: map.layer_count,
        });
    }
    let non_layer_from_donor = matches!(map.non_layer_policy, NonLayerPolicy::FromHigh);
    recombine(
        base,
        donor,
        map,
        |layer| (lo..=hi).contains(&layer),
        non_layer_from_donor,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ckpt(pairs: &[(&str, &[f32])]) -> Checkpoint {
        let mut c = Checkpoint::new();
        for (name, values) in pairs {
            c.insert(Tensor::from_f32(*name, vec![values.len()], values))
                .unwrap();
        }
        c
    }

    fn values(c: &Checkpoint, name: &str) -> Vec<f32> {
        c.get(name).unwrap().to_f32_vec()
    }

    fn tensors_equal(a: &Checkpoint, b: &Checkpoint) -> bool {
        a.len() == b.len()
            && a.iter()
                .all(|t| b.get(&t.name).map(|u| u.data == t.data).unwrap_or(false))
    }

    #[test]
    fn lerp_endpoints_are_exact() {
        let a = ckpt(&[("w", &[1.0, 2.0, -3.5])]);
        let b = ckpt(&[("w", &[3.0, 4.0, 0.25])]);
        assert!(tensors_equal(&lerp(&a, &b, 0.0).unwrap(), &a));
        assert!(tensors_equal(&lerp(&a, &b, 1.0).unwrap(), &b));
    }

    #[test]
    fn lerp_midpoint() {
        let a = ckpt(&[("w", &[1.0, 2.0])]);
        let b = ckpt(&[("w", &[3.0, 4.0])]);
        assert_eq!(values(&lerp(&a, &b, 0.5).unwrap(), "w"), vec![2.0, 3.0]);
    }

    // 1.5*b - 0.5*a evaluated by hand: [1.5*3-0.5*1, 1.5*4-0.5*2] = [4,5].
    #[test]
    fn lerp_extrapolates() {
        let a = ckpt(&[("w", &[1.0, 2.0])]);
        let b = ckpt(&[("w", &[3.0, 4.0])]);
        assert_eq!(values(&lerp(&a, &b, 1.5).unwrap(), "w"), vec![4.0, 5.0]);
    }

    #[test]
    fn lerp_records_metadata() {
        let mut a = ckpt(&[("w", &[1.0])]);
        let mut b = ckpt(&[("w", &[2.0])]);
        a.metadata.insert("id".into(), "low".into());
        b.metadata.insert("id".into(), "high".into());
        let m = lerp(&a, &b, 0.25).unwrap();
        assert_eq!(m.metadata.get("merge.alpha").unwrap(), "0.25");
        assert_eq!(m.metadata.get("merge.low").unwrap(), "low");
        assert_eq!(m.metadata.get("merge.high").unwrap(), "high");
    }

    #[test]
    fn bf16_inputs_upcast_in_memory_and_emit_f32() {
        let mut a = Checkpoint::new();
        let mut b = Checkpoint::new();
        // 1.0 and 2.0 are exactly representable in BF16.
        a.insert(Tensor::from_bf16_bits("w", vec![2], &[0x3f80, 0x3f80]))
            .unwrap();
        b.insert(Tensor::from_bf16_bits("w", vec![2], &[0x4000, 0x4000]))
            .unwrap();
        let m = lerp(&a, &b, 0.5).unwrap();
        let t = m.get("w").unwrap();
        assert_eq!(t.dtype, crate::store::DType::F32);
        assert_eq!(t.to_f32_vec(), vec![1.5, 1.5]);
    }

    #[test]
    fn lerp_rejects_non_finite_alpha() {
        let a = ckpt(&[("w", &[1.0])]);
        assert!(matches!(
            lerp(&a, &a, f64::NAN),
            Err(ArithError::NonFiniteAlpha(_))
        ));
    }

    #[test]
    fn lerp_rejects_incompatible() {
        let a = ckpt(&[("w", &[1.0, 2.0])]);
        let b = ckpt(&[("w", &[1.0])]);
        assert!(matches!(
            lerp(&a, &b, 0.5),
            Err(ArithError::Incompatible(_))
        ));
    }

    #[test]
    fn delta_cases() {
        let a = ckpt(&[("w", &[1.0, 2.0])]);
        assert_eq!(values(&delta(&a, &a).unwrap(), "w"), vec![0.0, 0.0]);
        let b = ckpt(&[("w", &[4.0, 6.0])]);
        assert_eq!(values(&delta(&a, &b).unwrap(), "w"), vec![3.0, 4.0]);
    }

    // lerp(a,b,alpha) == a + alpha*delta(a,b) within 1e-6 relative.
    #[test]
    fn lerp_matches_delta_composition() {
        let a = ckpt(&[("w", &[1.0, -2.0, 0.125, 7.5])]);
        let b = ckpt(&[("w", &[3.0, 4.0, -0.25, 2.5])]);
        for alpha in [-2.0, -0.5, 0.3, 1.0, 1.5, 3.0] {
            let merged = lerp(&a, &b, alpha).unwrap();
            let d = delta(&a, &b).unwrap();
            let va = values(&a, "w");
            let vd = values(&d, "w");
            for (i, m) in values(&merged, "w").iter().enumerate() {
                let expect = va[i] as f64 + alpha * vd[i] as f64;
                let tol = 1e-6 * expect.abs().max(1.0);
                assert!(
                    ((*m as f64) - expect).abs() <= tol,
                    "alpha={alpha} i={i} got={m} want={expect}"
                );
            }
        }
    }

    fn layered_pair(layers: usize) -> (Checkpoint, Checkpoint, LayerMap) {
        let mut low = Checkpoint::new();
        let mut high = Checkpoint::new();
        for l in 0..layers {
            let name = format!("layers.{l}.weight");
            low.insert(Tensor::from_f32(name.clone(), vec![2], &[l as f32, 0.0]))
                .unwrap();
            high.insert(Tensor::from_f32(name, vec![2], &[l as f32, 1.0]))
                .unwrap();
        }
        low.insert(Tensor::from_f32("embed", vec![2], &[-1.0, 0.0]))
            .unwrap();
        high.insert(Tensor::from_f32("embed", vec![2], &[-1.0, 1.0]))
            .unwrap();
        let map = LayerMap::new(r"layers\.(\d+)\.", layers, NonLayerPolicy::FromBase).unwrap();
        (low, high, map)
    }

    #[test]
    fn stitch_endpoints() {
        let (low, high, map) = layered_pair(2);
        assert!(tensors_equal(&stitch(&low, &high, 0, &map).unwrap(), &low));
        let full = stitch(&low, &high, 2, &map).unwrap();
        // All layers from high; NonLayer stays with low under FromBase.
        for l in 0..2 {
            let name = format!("layers.{l}.weight");
            assert_eq!(values(&full, &name), values(&high, &name));
        }
        assert_eq!(values(&full, "embed"), values(&low, "embed"));
    }

    #[test]
    fn stitch_two_layer_cut() {
        let (low, high, map) = layered_pair(2);
        let s = stitch(&low, &high, 1, &map).unwrap();
        assert_eq!(
            values(&s, "layers.0.weight"),
            values(&high, "layers.0.weight")
        );
        assert_eq!(
            values(&s, "layers.1.weight"),
            values(&low, "layers.1.weight")
        );
    }

    #[test]
    fn stitch_full_cut_with_from_high_policy_equals_high() {
        let (low, high, _) = layered_pair(2);
        let map = LayerMap::new(r"layers\.(\d+)\.", 2, NonLayerPolicy::FromHigh).unwrap();
        assert!(tensors_equal(&stitch(&low, &high, 2, &map).unwrap(), &high));
    }

    #[test]
    fn block_swap_cases() {
        let (base, donor, map) = layered_pair(4);
        // Full range takes every layer tensor from the donor.
        let all = block_swap(&base, &donor, 0, 3, &map).unwrap();
        for l in 0..4 {
            let name = format!("layers.{l}.weight");
            assert_eq!(values(&all, &name), values(&donor, &name));
        }
        assert_eq!(values(&all, "embed"), values(&base, "embed"));

        // donor == base leaves the output equal to base.
        let same = block_swap(&base, &base, 1, 2, &map).unwrap();
        assert!(tensors_equal(&same, &base));

        // Middle range [1,2]: layers 1,2 from donor; 0,3 from base.
        let mid = block_swap(&base, &donor, 1, 2, &map).unwrap();
        for l in [1usize, 2] {
            let name = format!("layers.{l}.weight");
            assert_eq!(values(&mid, &name), values(&donor, &name));
        }
        for l in [0usize, 3] {
            let name = format!("layers.{l}.weight");
            assert_eq!(values(&mid, &name), values(&base, &name));
        }
    }

    // stitch(low,high,k) == block_swap(low<-high, [0,k-1]) for k >= 1.
    #[test]
    fn stitch_block_swap_coherence() {
        let (low, high, map) = layered_pair(4);
        for k in 1..=4usize {
            let a = stitch(&low, &high, k, &map).unwrap();
            let b = block_swap(&low, &high, 0, k - 1, &map).unwrap();
            assert!(tensors_equal(&a, &b), "cutpoint {k}");
        }
    }

    #[test]
    fn stitch_rejects_out_of_range_cutpoint() {
        let (low, high, map) = layered_pair(2);
        assert!(matches!(
            stitch(&low, &high, 3, &map),
            Err(ArithError::CutpointOutOfRange { .. })
        ));
    }

    #[test]
    fn block_swap_rejects_bad_range() {
        let (low, high, map) = layered_pair(2);
        assert!(matches!(
            block_swap(&low, &high, 0, 2, &map),
            Err(ArithError::RangeOutOfRange { .. })
        ));
        assert!(matches!(
            block_swap(&low, &high, 1, 0, &map),
            Err(ArithError::RangeOutOfRange { .. })
        ));
    }

    #[test]
    fn layer_index_beyond_count_is_unmapped() {
        let (low, high, _) = layered_pair(4);
        let map = LayerMap::new(r"layers\.(\d+)\.", 2, NonLayerPolicy::FromBase).unwrap();
        assert!(matches!(
            stitch(&low, &high, 1, &map),
            Err(ArithError::LayerOutOfRange { .. })
        ));
    }

    #[test]
    fn infer_layer_count_scans_names() {
        let (low, _, _) = layered_pair(6);
        assert_eq!(
            LayerMap::infer_layer_count(r"layers\.(\d+)\.", &low).unwrap(),
            6
        );
        assert_eq!(
            LayerMap::infer_layer_count(r"blocks\.(\d+)\.", &low).unwrap(),
            0
        );
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_pair() -> impl Strategy<Value = (Vec<f32>, Vec<f32>)> {
            (1usize..16).prop_flat_map(|n| {
                (
                    proptest::collection::vec(-100.0f32..100.0, n),
                    proptest::collection::vec(-100.0f32..100.0, n),
                )
            })
        }

        proptest! {
            // Affine consistency with dyadic alphas, where 1-alpha is exact:
            // lerp(a,b,alpha) == lerp(b,a,1-alpha) bitwise.
            #[test]
            fn affine_consistency((va, vb) in arb_pair(), num in 0i32..=8) {
                let alpha = num as f64 / 8.0;
                let a = ckpt(&[("w", &va)]);
                let b = ckpt(&[("w", &vb)]);
                let x = lerp(&a, &b, alpha).unwrap();
                let y = lerp(&b, &a, 1.0 - alpha).unwrap();
                prop_assert_eq!(values(&x, "w"), values(&y, "w"));
            }

            // delta(a, lerp(a,b,alpha)) == alpha * delta(a,b) within 1e-6 relative.
            #[test]
            fn delta_composition((va, vb) in arb_pair(), num in -8i32..=16) {
                let alpha = num as f64 / 8.0;
                let a = ckpt(&[("w", &va)]);
                let b = ckpt(&[("w", &vb)]);
                let m = lerp(&a, &b, alpha).unwrap();
                let lhs = values(&delta(&a, &m).unwrap(), "w");
                let rhs = values(&delta(&a, &b).unwrap(), "w");
                for ((l, r), v0) in lhs.iter().zip(rhs.iter()).zip(va.iter()) {
                    let want = alpha * (*r as f64);
                    // F32 emission rounds relative to the value magnitude,
                    // so the scale includes the endpoint, not just the delta.
                    let tol = 1e-6 * (want.abs() + (*v0 as f64).abs() + 1e-3);
                    prop_assert!(((*l as f64) - want).abs() <= tol);
                }
            }
        }
    }
}
