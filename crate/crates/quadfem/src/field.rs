//! Exact test functions with closed-form value, gradient, and Laplacian.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::{Error, Result};

type ValueFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(f64, f64) -> [f64; 2] + Send + Sync>;

/// A scalar field on the unit square with analytic derivatives.
#[derive(Clone)]
pub enum ScalarField {
    /// `x^3 + 5 y^2 - 10 y^3 + y^4`
    Quartic,
    /// `exp(-100 [(x - 1/4)^2 + (y - 1/3)^2])`
    Peak,
    /// `x^i y^j`
    Monomial(u32, u32),
    Custom {
        name: String,
        value: ValueFn,
        gradient: GradFn,
        laplacian: ValueFn,
    },
}

impl ScalarField {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        match self {
            ScalarField::Quartic => x.powi(3) + 5.0 * y * y - 10.0 * y.powi(3) + y.powi(4),
            ScalarField::Peak => peak_value(x, y),
            ScalarField::Monomial(i, j) => x.powi(*i as i32) * y.powi(*j as i32),
            ScalarField::Custom { value, .. } => value(x, y),
        }
    }

    pub fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        match self {
            ScalarField::Quartic => [
                3.0 * x * x,
                10.0 * y - 30.0 * y * y + 4.0 * y.powi(3),
            ],
            ScalarField::Peak => {
                let u = peak_value(x, y);
                [-200.0 * (x - 0.25) * u, -200.0 * (y - 1.0 / 3.0) * u]
            }
            ScalarField::Monomial(i, j) => {
                let (i, j) = (*i, *j);
                let dx = if i == 0 {
                    0.0
                } else {
                    i as f64 * x.powi(i as i32 - 1) * y.powi(j as i32)
                };
                let dy = if j == 0 {
                    0.0
                } else {
                    j as f64 * x.powi(i as i32) * y.powi(j as i32 - 1)
                };
                [dx, dy]
            }
            ScalarField::Custom { gradient, .. } => gradient(x, y),
        }
    }

    pub fn laplacian(&self, x: f64, y: f64) -> f64 {
        match self {
            ScalarField::Quartic => 6.0 * x + 10.0 - 60.0 * y + 12.0 * y * y,
            ScalarField::Peak => {
                let r2 = (x - 0.25).powi(2) + (y - 1.0 / 3.0).powi(2);
                (-400.0 + 40000.0 * r2) * peak_value(x, y)
            }
            ScalarField::Monomial(i, j) => {
                let (i, j) = (*i, *j);
                let mut lap = 0.0;
                if i >= 2 {
                    lap += (i * (i - 1)) as f64 * x.powi(i as i32 - 2) * y.powi(j as i32);
                }
                if j >= 2 {
                    lap += (j * (j - 1)) as f64 * x.powi(i as i32) * y.powi(j as i32 - 2);
                }
                lap
            }
            ScalarField::Custom { laplacian, .. } => laplacian(x, y),
        }
    }

    pub fn custom(
        name: &str,
        value: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(f64, f64) -> [f64; 2] + Send + Sync + 'static,
        laplacian: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        ScalarField::Custom {
            name: name.to_string(),
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            laplacian: Arc::new(laplacian),
        }
    }
}

fn peak_value(x: f64, y: f64) -> f64 {
    (-100.0 * ((x - 0.25).powi(2) + (y - 1.0 / 3.0).powi(2))).exp()
}

impl fmt::Display for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Quartic => write!(f, "quartic"),
            ScalarField::Peak => write!(f, "peak"),
            ScalarField::Monomial(i, j) => write!(f, "monomial:{i},{j}"),
            ScalarField::Custom { name, .. } => write!(f, "{name}"),
        }
    }
}

impl FromStr for ScalarField {
    type Err = Error;

    /// `quartic | peak | monomial:i,j`
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quartic" => Ok(ScalarField::Quartic),
            "peak" => Ok(ScalarField::Peak),
            other => {
                if let Some(rest) = other.strip_prefix("monomial:") {
                    let mut it = rest.split(',');
                    let parse = |t: Option<&str>| -> Result<u32> {
                        t.ok_or_else(|| {
                            Error::InvalidArgument("monomial needs two exponents".into())
                        })?
                        .trim()
                        .parse()
                        .map_err(|_| Error::InvalidArgument(format!("bad monomial '{rest}'")))
                    };
                    let i = parse(it.next())?;
                    let j = parse(it.next())?;
                    if it.next().is_some() {
                        return Err(Error::InvalidArgument(format!("bad monomial '{rest}'")));
                    }
                    Ok(ScalarField::Monomial(i, j))
                } else {
                    Err(Error::InvalidArgument(format!(
                        "unknown field '{other}' (quartic | peak | monomial:i,j)"
                    )))
                }
            }
        }
    }
}

/// A Dirichlet Poisson test problem: the exact solution `u`, the source
/// `f = -Δu`, and boundary data `g = u` on the boundary.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub u: ScalarField,
}

impl Problem {
    pub fn new(name: &str, u: ScalarField) -> Self {
        Problem {
            name: name.to_string(),
            u,
        }
    }

    pub fn quartic() -> Self {
        Self::new("quartic", ScalarField::Quartic)
    }

    pub fn peak() -> Self {
        Self::new("peak", ScalarField::Peak)
    }

    /// The source term, derived analytically from the registered solution.
    pub fn source(&self) -> ScalarField {
        let u = self.u.clone();
        ScalarField::custom(
            "source",
            move |x, y| -u.laplacian(x, y),
            |_, _| [0.0, 0.0],
            |_, _| 0.0,
        )
    }

    /// Boundary data: the trace of the exact solution.
    pub fn boundary(&self) -> ScalarField {
        self.u.clone()
    }
}

impl FromStr for Problem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quartic" => Ok(Problem::quartic()),
            "peak" => Ok(Problem::peak()),
            other => Err(Error::InvalidArgument(format!(
                "unknown problem '{other}' (quartic | peak)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_derivatives(u: &ScalarField) {
        let h = 1e-6;
        for &(x, y) in &[(0.3, 0.4), (0.7, 0.2), (0.25, 1.0 / 3.0), (0.9, 0.85)] {
            let g = u.gradient(x, y);
            let fd = [
                (u.value(x + h, y) - u.value(x - h, y)) / (2.0 * h),
                (u.value(x, y + h) - u.value(x, y - h)) / (2.0 * h),
            ];
            assert!((g[0] - fd[0]).abs() < 1e-5, "{u}: du/dx at ({x},{y})");
            assert!((g[1] - fd[1]).abs() < 1e-5, "{u}: du/dy at ({x},{y})");
            let lap_fd = (u.gradient(x + h, y)[0] - u.gradient(x - h, y)[0]) / (2.0 * h)
                + (u.gradient(x, y + h)[1] - u.gradient(x, y - h)[1]) / (2.0 * h);
            assert!((u.laplacian(x, y) - lap_fd).abs() < 1e-5, "{u}: laplacian");
        }
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        check_derivatives(&ScalarField::Quartic);
        check_derivatives(&ScalarField::Peak);
        check_derivatives(&ScalarField::Monomial(3, 2));
        check_derivatives(&ScalarField::Monomial(0, 2));
    }

    #[test]
    fn field_parsing() {
        assert!(matches!(
            "monomial:0,2".parse::<ScalarField>().unwrap(),
            ScalarField::Monomial(0, 2)
        ));
        assert!("monomial:0".parse::<ScalarField>().is_err());
        assert!("gaussian".parse::<ScalarField>().is_err());
    }

    #[test]
    fn quartic_source_sign() {
        let p = Problem::quartic();
        let f = p.source();
        // -Δu = -(6x + 10 - 60y + 12y^2)
        assert!((f.value(0.0, 0.0) + 10.0).abs() < 1e-14);
        assert!((f.value(1.0, 0.0) + 16.0).abs() < 1e-14);
    }
}
