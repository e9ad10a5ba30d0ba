//! Declarative text format for tabular MDPs.
//!
//! Line-oriented: blank lines and `#` comments ignored. Directives:
//!
//! ```text
//! states 3
//! actions 2
//! horizon 5
//! gamma 0.99
//! r_max 1.0
//! initial 0 1.0
//! transition 0 1 2 0.9     # s a s' prob
//! reward 0 1 0.5           # s a value
//! ```
//!
//! Unlisted transition/reward/initial entries default to zero; the
//! assembled tables must satisfy the usual stochasticity constraints.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::policy_grad::{Mdp, MdpError};

#[derive(Debug, Error)]
pub enum MdpFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing directive `{0}`")]
    Missing(&'static str),
    #[error("invalid MDP: {0}")]
    Invalid(#[from] MdpError),
}

pub fn parse_mdp_file(path: &Path) -> Result<Mdp, MdpFileError> {
    let text = fs::read_to_string(path).map_err(|source| MdpFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_mdp_str(&text)
}

pub fn parse_mdp_str(text: &str) -> Result<Mdp, MdpFileError> {
    let mut n_states = None;
    let mut n_actions = None;
    let mut horizon = None;
    let mut gamma = None;
    let mut r_max = 1.0f64;
    let mut transitions: Vec<(usize, usize, usize, f64)> = Vec::new();
    let mut rewards: Vec<(usize, usize, f64)> = Vec::new();
    let mut initial: Vec<(usize, f64)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tok = line.split_whitespace();
        let head = tok.next().expect("nonempty line");
        let rest: Vec<&str> = tok.collect();
        let bad = |message: String| MdpFileError::Malformed { line: line_no, message };
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| bad(format!("expected integer, got `{s}`")))
        };
        let parse_f64 = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| bad(format!("expected number, got `{s}`")))
        };
        match head {
            "states" => n_states = Some(parse_usize(one(&rest, line_no)?)?),
            "actions" => n_actions = Some(parse_usize(one(&rest, line_no)?)?),
            "horizon" => horizon = Some(parse_usize(one(&rest, line_no)?)?),
            "gamma" => gamma = Some(parse_f64(one(&rest, line_no)?)?),
            "r_max" => r_max = parse_f64(one(&rest, line_no)?)?,
            "initial" => {
                if rest.len() != 2 {
                    return Err(bad("initial takes <state> <prob>".to_string()));
                }
                initial.push((parse_usize(rest[0])?, parse_f64(rest[1])?));
            }
            "transition" => {
                if rest.len() != 4 {
                    return Err(bad("transition takes <s> <a> <s'> <prob>".to_string()));
                }
                transitions.push((
                    parse_usize(rest[0])?,
                    parse_usize(rest[1])?,
                    parse_usize(rest[2])?,
                    parse_f64(rest[3])?,
                ));
            }
            "reward" => {
                if rest.len() != 3 {
                    return Err(bad("reward takes <s> <a> <value>".to_string()));
                }
                rewards.push((parse_usize(rest[0])?, parse_usize(rest[1])?, parse_f64(rest[2])?));
            }
            other => return Err(bad(format!("unknown directive `{other}`"))),
        }
    }

    let s = n_states.ok_or(MdpFileError::Missing("states"))?;
    let a = n_actions.ok_or(MdpFileError::Missing("actions"))?;
    let h = horizon.ok_or(MdpFileError::Missing("horizon"))?;
    let g = gamma.ok_or(MdpFileError::Missing("gamma"))?;

    let mut transition = vec![0.0; s * a * s];
    for (si, ai, sp, p) in transitions {
        if si >= s || ai >= a || sp >= s {
            return Err(MdpFileError::Malformed {
                line: 0,
                message: format!("transition ({si},{ai},{sp}) out of range"),
            });
        }
        transition[(si * a + ai) * s + sp] = p;
    }
    let mut reward = vec![0.0; s * a];
    for (si, ai, r) in rewards {
        if si >= s || ai >= a {
            return Err(MdpFileError::Malformed {
                line: 0,
                message: format!("reward ({si},{ai}) out of range"),
            });
        }
        reward[si * a + ai] = r;
    }
    let mut init = vec![0.0; s];
    for (si, p) in initial {
        if si >= s {
            return Err(MdpFileError::Malformed {
                line: 0,
                message: format!("initial state {si} out of range"),
            });
        }
        init[si] = p;
    }
    Ok(Mdp::new(s, a, transition, reward, h, g, init, r_max)?)
}

fn one<'a>(rest: &[&'a str], line: usize) -> Result<&'a str, MdpFileError> {
    if rest.len() == 1 {
        Ok(rest[0])
    } else {
        Err(MdpFileError::Malformed {
            line,
            message: "directive takes exactly one argument".to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy_grad::Env;

    const TWO_STATE: &str = "\
# a tiny deterministic two-state machine
states 2
actions 2
horizon 3
gamma 0.9
initial 0 1.0
transition 0 0 0 1.0
transition 0 1 1 1.0
transition 1 0 0 1.0
transition 1 1 1 1.0
reward 1 1 1.0
";

    #[test]
    fn parses_a_complete_file() {
        let mdp = parse_mdp_str(TWO_STATE).unwrap();
        assert_eq!(mdp.n_states(), 2);
        assert_eq!(mdp.n_actions(), 2);
        assert_eq!(mdp.horizon(), 3);
        assert_eq!(mdp.reward(1, 1), 1.0);
        assert_eq!(mdp.transition_row(0, 1), &[0.0, 1.0]);
    }

    #[test]
    fn missing_directives_are_reported() {
        let err = parse_mdp_str("states 2\nactions 1\nhorizon 2\n").unwrap_err();
        assert!(matches!(err, MdpFileError::Missing("gamma")));
    }

    #[test]
    fn bad_rows_surface_the_validation_error() {
        let text = TWO_STATE.replace("transition 0 0 0 1.0", "transition 0 0 0 0.4");
        let err = parse_mdp_str(&text).unwrap_err();
        assert!(matches!(err, MdpFileError::Invalid(MdpError::BadTransitionRow { .. })));
    }

    #[test]
    fn unknown_directives_are_malformed() {
        let err = parse_mdp_str("states 2\nbanana 4\n").unwrap_err();
        assert!(matches!(err, MdpFileError::Malformed { line: 2, .. }));
    }
}
