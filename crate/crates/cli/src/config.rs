use clap::{Parser, ValueEnum};
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Validate,
    Resolve,
    Sweep,
    Carleman,
    Resonances,
    Evolve,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Validate => "validate",
            Command::Resolve => "resolve",
            Command::Sweep => "sweep",
            Command::Carleman => "carleman",
            Command::Resonances => "resonances",
            Command::Evolve => "evolve",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Schrodinger,
    Cosine,
    Sine,
}

/// A list `a,b,c`, a linear grid `lin:a:b:n` or a geometric grid `log:a:b:n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl std::str::FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let num = |t: &str| crate::specfile::parse_number(t.trim()).ok_or_else(|| format!("'{t}' is not a number"));
        let parts: Vec<&str> = s.split(':').collect();
        let values = match parts.as_slice() {
            [mode @ ("lin" | "log"), a, b, n] => {
                let (a, b) = (num(a)?, num(b)?);
                let n: usize = n.trim().parse().map_err(|_| format!("'{n}' is not a count"))?;
                if n == 0 {
                    return Err("grid needs at least one point".into());
                }
                if *mode == "log" && !(a > 0.0 && b > 0.0) {
                    return Err("geometric grid needs positive ends".into());
                }
                (0..n)
                    .map(|k| {
                        let t = if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
                        if *mode == "log" {
                            (a.ln() + t * (b.ln() - a.ln())).exp()
                        } else {
                            a + t * (b - a)
                        }
                    })
                    .collect()
            }
            [_] => s.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
            _ => return Err(format!("cannot read grid '{s}'")),
        };
        if values.iter().any(|v| !v.is_finite()) {
            return Err("grid values must be finite".into());
        }
        Ok(Grid(values))
    }
}

/// `re0,re1,im0,im1`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RectArg(pub [f64; 4]);

impl std::str::FromStr for RectArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let v = s
            .split(',')
            .map(|t| crate::specfile::parse_number(t.trim()).ok_or_else(|| format!("'{t}' is not a number")))
            .collect::<Result<Vec<_>, _>>()?;
        match *v.as_slice() {
            [a, b, c, d] if a < b && c < d && v.iter().all(|x| x.is_finite()) => Ok(RectArg([a, b, c, d])),
            [_, _, _, _] => Err("rectangle needs re0 < re1 and im0 < im1".into()),
            _ => Err("rectangle is re0,re1,im0,im1".into()),
        }
    }
}

#[derive(Clone, Debug, Parser)]
#[command(name = "bvlap", version, about = "Resolvent, Carleman and resonance computations for 1D magnetic Schrodinger operators")]
pub struct RunConfig {
    #[arg(value_enum)]
    pub command: Command,
    /// Coefficient file.
    #[arg(long = "spec")]
    pub spec_path: PathBuf,
    /// Output directory; created if missing.
    #[arg(long = "out", default_value = "bvlap-out")]
    pub output_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Weight exponent.
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    /// Semiclassical parameters; defaults to the file's `h` (sweep: log:0.05:1:10).
    #[arg(long = "h-grid")]
    pub h_grid: Option<Grid>,
    #[arg(long = "E", default_value_t = 1.0)]
    pub energy: f64,
    /// Imaginary part of the spectral parameter; 0 selects the outgoing limit.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub eps: f64,
    /// Search rectangle in λ.
    #[arg(long, default_value = "-5,5,-3,0.5", allow_hyphen_values = true)]
    pub rect: RectArg,
    /// Lower end of a strip certificate; omitted means no strip.
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[arg(long = "re-max", default_value_t = 50.0)]
    pub re_max: f64,
    #[arg(long = "theta-grid", default_value = "lin:0.05:2:40")]
    pub theta_grid: Grid,
    #[arg(long = "t-grid", default_value = "lin:0:40:161")]
    pub t_grid: Grid,
    /// Spectral cutoff for evolve.
    #[arg(long = "Lambda", default_value_t = 100.0)]
    pub lambda_cut: f64,
    #[arg(long, value_enum, default_value_t = Kind::Cosine)]
    pub kind: Kind,
    /// Root-finding tolerance for resonances.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Iterations of the norm estimator.
    #[arg(long, default_value_t = 60)]
    pub iters: usize,
    /// Random data samples per h for carleman.
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    /// Inner radius of the phase; defaults to the coefficient core radius.
    #[arg(long)]
    pub r1: Option<f64>,
    /// Fixed phase slope instead of the automatic choice.
    #[arg(long = "phase-slope")]
    pub phase_slope: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    pub eta: f64,
}

impl RunConfig {
    /// Range checks on the numeric parameters.
    pub fn check(&self) -> Result<(), String> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(format!("--{name} must be positive and finite, got {v}"))
            }
        };
        if !(self.s >= 0.0 && self.s.is_finite()) {
            return Err(format!("--s must be nonnegative, got {}", self.s));
        }
        if !self.energy.is_finite() || !self.eps.is_finite() {
            return Err("--E and --eps must be finite".into());
        }
        pos("tol", self.tol)?;
        pos("Lambda", self.lambda_cut)?;
        pos("re-max", self.re_max)?;
        pos("eta", self.eta)?;
        if let Some(l) = self.lambda0 {
            pos("lambda0", l)?;
        }
        if let Some(r) = self.r1 {
            pos("r1", r)?;
        }
        if let Some(k) = self.phase_slope {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(format!("--phase-slope must be nonnegative, got {k}"));
            }
        }
        if let Some(g) = &self.h_grid {
            if g.0.iter().any(|&h| h <= 0.0) {
                return Err("--h-grid values must be positive".into());
            }
        }
        if self.theta_grid.0.iter().any(|&t| t <= 0.0) {
            return Err("--theta-grid values must be positive".into());
        }
        if self.t_grid.0.iter().any(|&t| t < 0.0) {
            return Err("--t-grid values must be nonnegative".into());
        }
        if self.iters == 0 || self.samples == 0 {
            return Err("--iters and --samples must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!("0.5,1".parse::<Grid>().unwrap().0, vec![0.5, 1.0]);
        assert_eq!("lin:0:1:3".parse::<Grid>().unwrap().0, vec![0.0, 0.5, 1.0]);
        let g = "log:0.01:1:3".parse::<Grid>().unwrap().0;
        assert!((g[1] - 0.1).abs() < 1e-15);
        assert!("log:0:1:3".parse::<Grid>().is_err());
        assert!("lin:0:1".parse::<Grid>().is_err());
    }

    #[test]
    fn rect() {
        assert_eq!("-1,1,-2,0.5".parse::<RectArg>().unwrap().0, [-1.0, 1.0, -2.0, 0.5]);
        assert!("1,-1,0,1".parse::<RectArg>().is_err());
    }
}
