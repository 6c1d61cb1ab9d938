use std::fmt;

/// Slope used for leaky ReLU when none is given.
pub const DEFAULT_LEAKY_ALPHA: f64 = 0.01;

/// Elementwise nonlinearity applied after every weight matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Sigmoid,
    Relu,
    LeakyRelu { alpha: f64 },
    Identity,
}

impl Activation {
    pub fn leaky() -> Self {
        Activation::LeakyRelu {
            alpha: DEFAULT_LEAKY_ALPHA,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
            Activation::LeakyRelu { .. } => "leaky_relu",
            Activation::Identity => "identity",
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match *self {
            Activation::LeakyRelu { alpha } => Some(alpha),
            _ => None,
        }
    }

    /// Parses `sigmoid`, `relu`, `leaky_relu` (or `leaky`) and `identity`.
    pub fn from_name(name: &str, alpha: Option<f64>) -> Option<Self> {
        match name {
            "sigmoid" => Some(Activation::Sigmoid),
            "relu" => Some(Activation::Relu),
            "leaky_relu" | "leaky" => Some(Activation::LeakyRelu {
                alpha: alpha.unwrap_or(DEFAULT_LEAKY_ALPHA),
            }),
            "identity" | "linear" => Some(Activation::Identity),
            _ => None,
        }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Relu => x.max(0.0),
            Activation::LeakyRelu { alpha } => {
                if x >= 0.0 {
                    x
                } else {
                    alpha * x
                }
            }
            Activation::Identity => x,
        }
    }

    /// Derivative at pre-activation `x`, given `y = apply(x)`.
    ///
    /// ReLU uses 0 at the kink, so units sitting exactly at zero stay dead.
    #[inline]
    pub fn derivative(&self, x: f64, y: f64) -> f64 {
        match *self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu { alpha } => {
                if x >= 0.0 {
                    1.0
                } else {
                    alpha
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn is_piecewise_linear(&self) -> bool {
        !matches!(self, Activation::Sigmoid)
    }

    /// Which linear piece a pre-activation falls on (`true` = the unit-slope
    /// piece). Ties at zero go to the unit-slope side, so a point on a
    /// boundary joins the closed region it borders. `None` for sigmoid.
    pub fn piece(&self, x: f64) -> Option<bool> {
        match self {
            Activation::Sigmoid => None,
            Activation::Identity => Some(true),
            Activation::Relu | Activation::LeakyRelu { .. } => Some(x >= 0.0),
        }
    }

    /// Slope of the selected linear piece.
    pub fn piece_slope(&self, unit_slope: bool) -> f64 {
        match *self {
            Activation::Relu if !unit_slope => 0.0,
            Activation::LeakyRelu { alpha } if !unit_slope => alpha,
            _ => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::LeakyRelu { alpha } => write!(f, "leaky_relu({alpha})"),
            other => f.write_str(other.name()),
        }
    }
}
