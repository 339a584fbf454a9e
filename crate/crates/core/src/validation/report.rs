use std::fmt;

/// Default pass threshold on `|z|`.
pub const DEFAULT_Z_THRESHOLD: f64 = 4.0;

/// One checked statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct Statistic {
    pub name: String,
    pub empirical: f64,
    pub target: f64,
    /// Monte-Carlo standard error; zero for deterministic checks.
    pub std_error: f64,
    /// `(empirical - target) / std_error`; NaN when there is no standard error.
    pub z: f64,
    pub pass: bool,
}

impl Statistic {
    /// Passes iff `|z| ≤ threshold`.
    pub fn z_test(name: impl Into<String>, empirical: f64, target: f64, std_error: f64, threshold: f64) -> Self {
        let z = z_score(empirical, target, std_error);
        let pass = z.abs() <= threshold || (std_error == 0.0 && empirical == target);
        Statistic { name: name.into(), empirical, target, std_error, z, pass }
    }

    /// Passes iff `|empirical - target| ≤ tolerance`; `z` is still reported.
    pub fn within(name: impl Into<String>, empirical: f64, target: f64, std_error: f64, tolerance: f64) -> Self {
        let z = z_score(empirical, target, std_error);
        let pass = (empirical - target).abs() <= tolerance;
        Statistic { name: name.into(), empirical, target, std_error, z, pass }
    }
}

fn z_score(empirical: f64, target: f64, se: f64) -> f64 {
    if se > 0.0 {
        (empirical - target) / se
    } else if empirical == target {
        0.0
    } else {
        f64::NAN
    }
}

/// The outcome of one suite: a list of statistics and their verdicts.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport {
    pub suite: String,
    pub n_samples: usize,
    pub statistics: Vec<Statistic>,
}

impl MomentReport {
    pub fn new(suite: impl Into<String>, n_samples: usize) -> Self {
        MomentReport { suite: suite.into(), n_samples, statistics: Vec::new() }
    }

    pub fn push(&mut self, s: Statistic) {
        self.statistics.push(s);
    }

    pub fn passed(&self) -> bool {
        self.statistics.iter().all(|s| s.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Statistic> {
        self.statistics.iter().filter(|s| !s.pass)
    }

    pub fn max_abs_z(&self) -> f64 {
        self.statistics.iter().map(|s| s.z.abs()).filter(|z| z.is_finite()).fold(0.0, f64::max)
    }

    pub const CSV_HEADER: &'static str = "suite,statistic,empirical,target,std_error,z,pass";

    /// CSV rows (no header), one per statistic.
    pub fn csv_rows(&self) -> String {
        let mut out = String::new();
        for s in &self.statistics {
            out.push_str(&format!(
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
                self.suite, s.name, s.empirical, s.target, s.std_error, s.z, s.pass
            ));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}", Self::CSV_HEADER, self.csv_rows())
    }
}

impl fmt::Display for MomentReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        writeln!(f, "{} [{verdict}] n = {}", self.suite, self.n_samples)?;
        let width = self.statistics.iter().map(|s| s.name.len()).max().unwrap_or(0);
        for s in &self.statistics {
            writeln!(
                f,
                "  {:<width$}  {:>13.6e}  target {:>13.6e}  z {:>7.2}  {}",
                s.name,
                s.empirical,
                s.target,
                s.z,
                if s.pass { "ok" } else { "FAIL" },
            )?;
        }
        Ok(())
    }
}
