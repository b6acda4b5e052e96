//! Process exit codes. Every failure path has its own code.

use conic_core::Error;

use crate::config::ConfigError;

pub const VERIFY_FAILED: u8 = 1;
pub const USAGE: u8 = 2;
pub const CONFIG_READ: u8 = 3;
pub const CONFIG_PARSE: u8 = 4;

/// `(code, meaning)` for `--help`.
pub const TABLE: &[(u8, &str)] = &[
    (0, "success (verify: every criterion passed)"),
    (VERIFY_FAILED, "verify: at least one criterion failed"),
    (USAGE, "invalid command line"),
    (CONFIG_READ, "configuration file could not be read"),
    (CONFIG_PARSE, "configuration is not valid TOML or has unknown keys"),
    (10, "configuration value out of range"),
    (11, "decay claim contradicted by the coefficients"),
    (12, "geometry error"),
    (13, "grid too coarse for the requested energies"),
    (14, "grid alignment error"),
    (15, "assembly error"),
    (16, "conjugate operator error"),
    (17, "numerical error"),
    (18, "time horizon too short or wall reached"),
    (19, "limiting absorption failure"),
    (20, "accuracy guard violated"),
    (21, "eigenfunction fit failure"),
    (22, "linear solve failure"),
    (23, "quadrature not converged"),
    (24, "spectral filter too soft"),
    (25, "output could not be written"),
];

pub fn for_error(e: &Error) -> u8 {
    match e {
        Error::Configuration(_) => 10,
        Error::Assumption { .. } => 11,
        Error::Geometry(_) => 12,
        Error::Resolution(_) => 13,
        Error::Alignment(_) => 14,
        Error::Assembly(_) => 15,
        Error::Conjugate(_) => 16,
        Error::Numerical(_) => 17,
        Error::Horizon(_) => 18,
        Error::Lap(_) => 19,
        Error::Accuracy(_) => 20,
        Error::Fit(_) => 21,
        Error::Solve(_) => 22,
        Error::Quadrature(_) => 23,
        Error::Filter(_) => 24,
        Error::Io(_) => 25,
    }
}

pub fn for_config(e: &ConfigError) -> u8 {
    match e {
        ConfigError::Read(..) => CONFIG_READ,
        ConfigError::Parse(_) => CONFIG_PARSE,
        ConfigError::Invalid(e) => for_error(e),
    }
}

pub fn help_text() -> String {
    let mut s = String::from("Exit codes:\n");
    for (c, m) in TABLE {
        s.push_str(&format!("  {c:>3}  {m}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct() {
        let mut codes: Vec<u8> = TABLE.iter().map(|t| t.0).collect();
        codes.sort();
        codes.dedup();
        assert_eq!(codes.len(), TABLE.len());
        let errors = [
            Error::Configuration(String::new()),
            Error::Assumption { field: "a1", claimed: 0.0, measured: 0.0, radius: 0.0 },
            Error::Geometry(String::new()),
            Error::Resolution(String::new()),
            Error::Alignment(String::new()),
            Error::Assembly(String::new()),
            Error::Conjugate(String::new()),
            Error::Numerical(String::new()),
            Error::Horizon(String::new()),
            Error::Lap(String::new()),
            Error::Accuracy(String::new()),
            Error::Fit(String::new()),
            Error::Solve(String::new()),
            Error::Quadrature(String::new()),
            Error::Filter(String::new()),
            Error::Io(String::new()),
        ];
        let mut mapped: Vec<u8> = errors.iter().map(for_error).collect();
        assert!(mapped.iter().all(|c| TABLE.iter().any(|t| t.0 == *c)));
        mapped.sort();
        mapped.dedup();
        assert_eq!(mapped.len(), errors.len());
    }
}
