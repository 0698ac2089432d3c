//! Parameter engines that turn a regime description into stage configurations:
//! the endpoint search, the finite `L^p` height search, the bounded hitting-set
//! construction, and the admissible-modulus checker.

pub mod admissible;
pub mod bounded;
pub mod config;
pub mod endpoint;
mod lognum;
pub mod lp;

pub use admissible::{admissible_check, AdmissibleReport};
pub use bounded::{bounded_build, bounded_membership, BoundedConfig, HitSetManifest, MembershipProfile};
pub use config::{Built, RegimeConfig};
pub use endpoint::{endpoint_build, endpoint_choose_lambda, endpoint_scale_band, endpoint_scale_check, EndpointConfig, Feasibility};
pub use lognum::LogNum;
pub use lp::{lp_build, lp_stage_params, LpChoice, LpConfig};

use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Error, Result};

/// A closed-form sequence indexed by the stage number `k >= 1`.
#[derive(Clone, Debug, PartialEq)]
pub enum Schedule {
    /// `offset + sqrt(ln(k + 2))`
    SqrtLog { offset: f64 },
    /// `scale * ratio^k`
    Geometric { ratio: f64, scale: f64 },
    /// `2^(k + offset)`
    Pow2 { offset: i32 },
    Const(f64),
    /// Explicit values for `k = 1, 2, ...`.
    List(Vec<f64>),
}

impl Schedule {
    pub fn at(&self, k: u64) -> Result<f64> {
        if k == 0 {
            return Err(invalid("k", "stages are numbered from 1"));
        }
        Ok(match self {
            Schedule::SqrtLog { offset } => offset + ((k + 2) as f64).ln().sqrt(),
            Schedule::Geometric { ratio, scale } => scale * ratio.powi(k as i32),
            Schedule::Pow2 { offset } => 2f64.powi(k as i32 + offset),
            Schedule::Const(c) => *c,
            Schedule::List(v) => *v
                .get(k as usize - 1)
                .ok_or_else(|| invalid("schedule", format!("list has no entry for stage {k}")))?,
        })
    }

    /// `sum_{i > k} s_i`, for summable schedules only.
    pub fn tail_sum(&self, k: u64) -> Result<f64> {
        match self {
            Schedule::Geometric { ratio, scale } if ratio.abs() < 1.0 => {
                Ok(scale * ratio.powi(k as i32 + 1) / (1.0 - ratio))
            }
            Schedule::List(v) => Ok(v.iter().skip(k as usize).sum()),
            Schedule::Const(c) if *c == 0.0 => Ok(0.0),
            _ => Err(invalid("schedule", format!("{self} is not summable"))),
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::SqrtLog { offset } => write!(f, "sqrtlog({offset})"),
            Schedule::Geometric { ratio, scale } => write!(f, "geometric({ratio}, {scale})"),
            Schedule::Pow2 { offset } => write!(f, "pow2({offset})"),
            Schedule::Const(c) => write!(f, "const({c})"),
            Schedule::List(v) => {
                let items: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "list({})", items.join(", "))
            }
        }
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let open = s.find('(').ok_or_else(|| invalid("schedule", format!("expected tag(args), got {s:?}")))?;
        if !s.ends_with(')') {
            return Err(invalid("schedule", format!("missing closing parenthesis in {s:?}")));
        }
        let tag = &s[..open];
        let args: Vec<&str> = s[open + 1..s.len() - 1].split(',').map(str::trim).filter(|a| !a.is_empty()).collect();
        let num = |a: &str| a.parse::<f64>().map_err(|_| invalid("schedule", format!("{tag}: not a number: {a:?}")));
        let arity = |n: usize| {
            if args.len() == n {
                Ok(())
            } else {
                Err(invalid("schedule", format!("{tag} takes {n} argument(s), got {}", args.len())))
            }
        };
        match tag {
            "sqrtlog" => {
                arity(1)?;
                Ok(Schedule::SqrtLog { offset: num(args[0])? })
            }
            "geometric" => {
                arity(2)?;
                Ok(Schedule::Geometric { ratio: num(args[0])?, scale: num(args[1])? })
            }
            "pow2" => {
                arity(1)?;
                let offset = args[0]
                    .parse::<i32>()
                    .map_err(|_| invalid("schedule", format!("pow2: not an integer: {:?}", args[0])))?;
                Ok(Schedule::Pow2 { offset })
            }
            "const" => {
                arity(1)?;
                Ok(Schedule::Const(num(args[0])?))
            }
            "list" => {
                if args.is_empty() {
                    return Err(invalid("schedule", "list needs at least one value"));
                }
                Ok(Schedule::List(args.iter().map(|a| num(a)).collect::<Result<_>>()?))
            }
            other => Err(invalid("schedule", format!("unknown tag {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules_parse_and_evaluate() {
        let b: Schedule = "sqrtlog(100)".parse().unwrap();
        assert!((b.at(1).unwrap() - (100.0 + 3f64.ln().sqrt())).abs() < 1e-15);
        let a: Schedule = "geometric(0.5, 0.25)".parse().unwrap();
        assert_eq!(a.at(1).unwrap(), 0.125);
        assert_eq!(a.at(3).unwrap(), 2f64.powi(-5));
        // sum_{i > 2} 2^(-i-2) = 2^-4.
        assert!((a.tail_sum(2).unwrap() - 0.0625).abs() < 1e-16);
        let p: Schedule = "pow2(2)".parse().unwrap();
        assert_eq!(p.at(3).unwrap(), 32.0);
        assert!(p.tail_sum(1).is_err());
        let l: Schedule = "list(1, 2.5, 4)".parse().unwrap();
        assert_eq!(l.at(2).unwrap(), 2.5);
        assert_eq!(l.tail_sum(1).unwrap(), 6.5);
        assert!(l.at(4).is_err());
        for s in [b, a, p, l, Schedule::Const(3.0)] {
            assert_eq!(s.to_string().parse::<Schedule>().unwrap(), s);
        }
    }

    #[test]
    fn malformed_schedules_name_the_problem() {
        for bad in ["sqrtlog", "geometric(1)", "pow2(x)", "cubic(1)", "list()", "const(1"] {
            let e = bad.parse::<Schedule>().unwrap_err().to_string();
            assert!(e.contains("schedule"), "{bad}: {e}");
        }
    }
}
