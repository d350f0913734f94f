use serde::{Deserialize, Serialize};

/// Quantizer applied to a layer's pre-activations (or to the raw inputs).
///
/// Every quantized kind maps a real value to an integer *level* and back to a
/// dequantized real. Levels are carried in hardware by the bit encoding from
/// [`Activation::encode`]: LSB-first unsigned binary, except `BipolarSign`
/// (−1 ↦ 0, +1 ↦ 1) and `SignedFixed` (two's complement).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Activation {
    /// Levels {−1, +1}; zero maps to +1.
    BipolarSign,
    /// Clip to `[0, alpha]`, then `2^bits` uniform levels.
    Pact { bits: u32, alpha: f64 },
    /// Clip to `[-alpha, alpha]`, then `2^bits` uniform levels indexed from the
    /// bottom. One bit gives the bipolar pair `±alpha`.
    SymmetricPact { bits: u32, alpha: f64 },
    /// Signed fixed point `level * scale` with `level ∈ [-(2^(bits-1)-1), 2^(bits-1)-1]`.
    /// Used for classifier scores once calibrated.
    SignedFixed { bits: u32, scale: f64 },
    /// No quantization; only valid for the classifier during training.
    Identity,
}

/// `+1` for `x ≥ 0`, else `−1`.
pub fn sign_activation(x: f64) -> i64 {
    if x >= 0.0 {
        1
    } else {
        -1
    }
}

/// PACT level: `round(clamp(x, 0, alpha) * (2^bits - 1) / alpha)`, ties away from zero.
pub fn pact_quantize(x: f64, alpha: f64, bits: u32) -> i64 {
    let steps = max_level(bits) as f64;
    (x.clamp(0.0, alpha) * steps / alpha).round() as i64
}

/// Symmetric PACT level index in `0..2^bits`.
pub fn symmetric_quantize(x: f64, alpha: f64, bits: u32) -> i64 {
    let steps = max_level(bits) as f64;
    ((x.clamp(-alpha, alpha) + alpha) * steps / (2.0 * alpha)).round() as i64
}

#[inline]
fn max_level(bits: u32) -> i64 {
    (1i64 << bits) - 1
}

impl Activation {
    /// Wire width of one level; `None` for `Identity`.
    pub fn bits(&self) -> Option<u32> {
        match *self {
            Activation::BipolarSign => Some(1),
            Activation::Pact { bits, .. }
            | Activation::SymmetricPact { bits, .. }
            | Activation::SignedFixed { bits, .. } => Some(bits),
            Activation::Identity => None,
        }
    }

    pub fn is_quantized(&self) -> bool {
        !matches!(self, Activation::Identity)
    }

    /// Trainable clipping level, if the quantizer has one.
    pub fn alpha(&self) -> Option<f64> {
        match *self {
            Activation::Pact { alpha, .. } | Activation::SymmetricPact { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    pub(crate) fn alpha_mut(&mut self) -> Option<&mut f64> {
        match self {
            Activation::Pact { alpha, .. } | Activation::SymmetricPact { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// Inclusive level range.
    pub fn level_range(&self) -> Option<(i64, i64)> {
        match *self {
            Activation::BipolarSign => Some((-1, 1)),
            Activation::Pact { bits, .. } | Activation::SymmetricPact { bits, .. } => {
                Some((0, max_level(bits)))
            }
            Activation::SignedFixed { bits, .. } => {
                let m = max_level(bits - 1);
                Some((-m, m))
            }
            Activation::Identity => None,
        }
    }

    pub fn is_valid_level(&self, level: i64) -> bool {
        match self {
            Activation::BipolarSign => level == -1 || level == 1,
            _ => self
                .level_range()
                .is_some_and(|(lo, hi)| (lo..=hi).contains(&level)),
        }
    }

    /// Quantizes a finite real. Panics on `Identity`.
    pub fn quantize(&self, x: f64) -> i64 {
        match *self {
            Activation::BipolarSign => sign_activation(x),
            Activation::Pact { bits, alpha } => pact_quantize(x, alpha, bits),
            Activation::SymmetricPact { bits, alpha } => symmetric_quantize(x, alpha, bits),
            Activation::SignedFixed { bits, scale } => {
                let m = max_level(bits - 1);
                ((x / scale).round() as i64).clamp(-m, m)
            }
            Activation::Identity => panic!("identity activation has no levels"),
        }
    }

    /// Real value a level stands for.
    pub fn dequantize(&self, level: i64) -> f64 {
        match *self {
            Activation::BipolarSign => level as f64,
            Activation::Pact { bits, alpha } => level as f64 * alpha / max_level(bits) as f64,
            Activation::SymmetricPact { bits, alpha } => {
                -alpha + level as f64 * (2.0 * alpha) / max_level(bits) as f64
            }
            Activation::SignedFixed { scale, .. } => level as f64 * scale,
            Activation::Identity => panic!("identity activation has no levels"),
        }
    }

    /// Level → LSB-first bit pattern.
    pub fn encode(&self, level: i64) -> u32 {
        match *self {
            Activation::BipolarSign => u32::from(level > 0),
            Activation::SignedFixed { bits, .. } => (level as u32) & ((1u32 << bits) - 1),
            _ => level as u32,
        }
    }

    /// Bit pattern → level. Inverse of [`Activation::encode`] on valid levels.
    pub fn decode(&self, code: u32) -> i64 {
        match *self {
            Activation::BipolarSign => {
                if code & 1 == 1 {
                    1
                } else {
                    -1
                }
            }
            Activation::SignedFixed { bits, .. } => {
                let code = code & ((1u32 << bits) - 1);
                if code & (1 << (bits - 1)) != 0 {
                    code as i64 - (1i64 << bits)
                } else {
                    code as i64
                }
            }
            _ => code as i64,
        }
    }

    /// Whether encoded levels compare as two's complement (else unsigned).
    pub fn signed_encoding(&self) -> bool {
        matches!(self, Activation::SignedFixed { .. })
    }

    /// Forward value of the straight-through surrogate: the quantizer with its
    /// rounding removed.
    pub fn surrogate(&self, x: f64) -> f64 {
        match *self {
            Activation::BipolarSign => x.clamp(-1.0, 1.0),
            Activation::Pact { alpha, .. } => x.clamp(0.0, alpha),
            Activation::SymmetricPact { alpha, .. } => x.clamp(-alpha, alpha),
            Activation::SignedFixed { .. } | Activation::Identity => x,
        }
    }

    /// Straight-through derivatives `(d/dx, d/dalpha)` at `x`.
    pub fn ste_grad(&self, x: f64) -> (f64, f64) {
        match *self {
            Activation::BipolarSign => (if x.abs() <= 1.0 { 1.0 } else { 0.0 }, 0.0),
            Activation::Pact { alpha, .. } => {
                if x < 0.0 {
                    (0.0, 0.0)
                } else if x < alpha {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
            Activation::SymmetricPact { alpha, .. } => {
                if x <= -alpha {
                    (0.0, -1.0)
                } else if x < alpha {
                    (1.0, 0.0)
                } else {
                    (0.0, 1.0)
                }
            }
            Activation::SignedFixed { .. } | Activation::Identity => (1.0, 0.0),
        }
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        match *self {
            Activation::Pact { bits, alpha } | Activation::SymmetricPact { bits, alpha } => {
                if bits == 0 || bits > 16 {
                    return Err(format!("bits must be in 1..=16, got {bits}"));
                }
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(format!("alpha must be positive and finite, got {alpha}"));
                }
            }
            Activation::SignedFixed { bits, scale } => {
                if !(2..=16).contains(&bits) {
                    return Err(format!(
                        "signed fixed-point bits must be in 2..=16, got {bits}"
                    ));
                }
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(format!("scale must be positive and finite, got {scale}"));
                }
            }
            Activation::BipolarSign | Activation::Identity => {}
        }
        Ok(())
    }
}
