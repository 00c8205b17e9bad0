//! Step-size and accuracy schedules with symbolic summability checks.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScheduleError {
    #[error("schedule parameter {name} = {value} is out of range")]
    BadParameter { name: &'static str, value: f64 },
    #[error("tabulated schedule needs at least one value")]
    EmptyTable,
}

/// A sequence `s_k`, `k = 1, 2, ...`.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    /// `a / (k + b)^p`
    Power { a: f64, b: f64, p: f64 },
    /// `a` for every `k`
    Constant { a: f64 },
    /// Explicit values; the last one repeats forever.
    Table(Vec<f64>),
}

impl Schedule {
    pub fn power(a: f64, b: f64, p: f64) -> Result<Self, ScheduleError> {
        check_nonneg("a", a)?;
        check_nonneg("b", b)?;
        if !p.is_finite() {
            return Err(ScheduleError::BadParameter {
                name: "p",
                value: p,
            });
        }
        Ok(Schedule::Power { a, b, p })
    }

    pub fn constant(a: f64) -> Result<Self, ScheduleError> {
        check_nonneg("a", a)?;
        Ok(Schedule::Constant { a })
    }

    pub fn table(values: Vec<f64>) -> Result<Self, ScheduleError> {
        if values.is_empty() {
            return Err(ScheduleError::EmptyTable);
        }
        for &v in &values {
            check_nonneg("value", v)?;
        }
        Ok(Schedule::Table(values))
    }

    /// `k` starts at 1.
    pub fn value(&self, k: u64) -> f64 {
        match self {
            Schedule::Power { a, b, p } => a / (k as f64 + b).powf(*p),
            Schedule::Constant { a } => *a,
            Schedule::Table(values) => {
                let idx = (k.max(1) - 1) as usize;
                values[idx.min(values.len() - 1)]
            }
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            Schedule::Power { a, .. } | Schedule::Constant { a } => *a == 0.0,
            Schedule::Table(values) => values.iter().all(|&v| v == 0.0),
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Power { a, b, p } => write!(f, "{a}/(k+{b})^{p}"),
            Schedule::Constant { a } => write!(f, "{a}"),
            Schedule::Table(values) => write!(f, "table[{}]", values.len()),
        }
    }
}

fn check_nonneg(name: &'static str, value: f64) -> Result<(), ScheduleError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ScheduleError::BadParameter { name, value })
    }
}

/// Which convergence statement the schedules are checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Diminishing steps with a constant accuracy `ε₀ > 0`.
    Theorem1,
    /// Diminishing steps with `Σ α_k ε_k < ∞`.
    Theorem2,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Theorem1 => f.write_str("theorem1"),
            Mode::Theorem2 => f.write_str("theorem2"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validity {
    Valid,
    Invalid,
    Undecidable,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    pub validity: Validity,
    pub reason: String,
}

impl Verdict {
    fn valid() -> Self {
        Verdict {
            validity: Validity::Valid,
            reason: String::new(),
        }
    }

    fn invalid(reason: &str) -> Self {
        Verdict {
            validity: Validity::Invalid,
            reason: reason.to_owned(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.validity == Validity::Valid
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let word = match self.validity {
            Validity::Valid => "valid",
            Validity::Invalid => "invalid",
            Validity::Undecidable => "undecidable",
        };
        if self.reason.is_empty() {
            f.write_str(word)
        } else {
            write!(f, "{word} ({})", self.reason)
        }
    }
}

/// Decides the schedule conditions symbolically.
///
/// Steps must satisfy `Σ α_k = ∞` and `Σ α_k² < ∞`, which for `a/(k+b)^p`
/// with `a > 0` means `½ < p ≤ 1`. `Theorem1` additionally wants a constant
/// `ε₀ > 0`; `Theorem2` wants `Σ α_k ε_k < ∞`, i.e. the exponents of the two
/// power laws sum to more than one (or `ε ≡ 0`). Tabulated schedules only
/// describe a finite prefix, so they are never reported valid.
pub fn check_schedule(alpha: &Schedule, eps: &Schedule, mode: Mode) -> Verdict {
    if matches!(alpha, Schedule::Table(_)) || matches!(eps, Schedule::Table(_)) {
        return Verdict {
            validity: Validity::Undecidable,
            reason: "tabulated schedule; summability of the tail is unknown".to_owned(),
        };
    }
    let alpha_exponent = match *alpha {
        Schedule::Constant { a } if a > 0.0 => return Verdict::invalid("Σα² diverges"),
        Schedule::Power { a, p, .. } if a > 0.0 => {
            if p <= 0.5 {
                return Verdict::invalid("Σα² diverges");
            }
            if p > 1.0 {
                return Verdict::invalid("Σα converges");
            }
            p
        }
        _ => return Verdict::invalid("α ≡ 0, Σα converges"),
    };
    match mode {
        Mode::Theorem1 => match *eps {
            Schedule::Constant { a } if a > 0.0 => Verdict::valid(),
            _ => Verdict::invalid("ε must be a constant ε₀ > 0"),
        },
        Mode::Theorem2 => {
            if eps.is_zero() {
                return Verdict::valid();
            }
            match *eps {
                Schedule::Power { p, .. } if alpha_exponent + p > 1.0 => Verdict::valid(),
                _ => Verdict::invalid("Σαε diverges"),
            }
        }
    }
}
