//! Constrained QoS maximization over a resource/cost grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{MetricsError, Result};
use crate::scalar::Field;

/// QoS as a function of resources `R` and cost `C`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QosSurface<T> {
    /// Row-major values, one row per `r_axis` entry and one column per
    /// `c_axis` entry.
    Table(Vec<T>),
    /// `Q = a * R / (R + b) - c * C`.
    SaturatingLinear { a: T, b: T, c: T },
}

impl<T: Field> QosSurface<T> {
    pub fn family(&self) -> &'static str {
        match self {
            QosSurface::Table(_) => "table",
            QosSurface::SaturatingLinear { .. } => "saturating_linear",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumProblem<T> {
    r_axis: Vec<T>,
    c_axis: Vec<T>,
    surface: QosSurface<T>,
    c_max: T,
    r_min: T,
}

// NaN and infinities fail `v - v == 0`; rationals always pass.
#[allow(clippy::eq_op)]
fn is_finite<T: Field>(v: T) -> bool {
    v - v == T::zero()
}

fn check_axis<T: Field>(name: &str, axis: &[T]) -> Result<()> {
    if axis.is_empty() {
        return Err(MetricsError::arg(format!("{name} is empty")));
    }
    if !axis.iter().all(|&v| is_finite(v)) {
        return Err(MetricsError::arg(format!("{name} contains a non-finite value")));
    }
    if let Some(k) = axis.windows(2).position(|w| !(w[0] < w[1])) {
        return Err(MetricsError::arg(format!("{name} is not strictly increasing at index {}", k + 1)));
    }
    Ok(())
}

impl<T: Field> EquilibriumProblem<T> {
    pub fn new(r_axis: Vec<T>, c_axis: Vec<T>, surface: QosSurface<T>, c_max: T, r_min: T) -> Result<Self> {
        check_axis("r_axis", &r_axis)?;
        check_axis("c_axis", &c_axis)?;
        match &surface {
            QosSurface::Table(q) => {
                if q.len() != r_axis.len() * c_axis.len() {
                    return Err(MetricsError::arg(format!(
                        "q_surface has {} values, expected {} x {}",
                        q.len(),
                        r_axis.len(),
                        c_axis.len()
                    )));
                }
                if let Some(k) = q.iter().position(|&v| !is_finite(v)) {
                    return Err(MetricsError::arg(format!("q_surface value {k} is not finite")));
                }
            }
            QosSurface::SaturatingLinear { a, b, c } => {
                if ![*a, *b, *c].iter().all(|&v| is_finite(v)) {
                    return Err(MetricsError::arg("saturating_linear coefficients must be finite"));
                }
                if r_axis.iter().any(|&r| r + *b == T::zero()) {
                    return Err(MetricsError::arg("saturating_linear pole lies on r_axis"));
                }
            }
        }
        if !is_finite(c_max) || !is_finite(r_min) {
            return Err(MetricsError::arg("c_max and r_min must be finite"));
        }
        Ok(EquilibriumProblem { r_axis, c_axis, surface, c_max, r_min })
    }

    pub fn r_axis(&self) -> &[T] {
        &self.r_axis
    }

    pub fn c_axis(&self) -> &[T] {
        &self.c_axis
    }

    pub fn c_max(&self) -> T {
        self.c_max
    }

    pub fn r_min(&self) -> T {
        self.r_min
    }

    pub fn surface(&self) -> &QosSurface<T> {
        &self.surface
    }

    /// Same problem with different constraint bounds.
    pub fn with_bounds(&self, c_max: T, r_min: T) -> Result<Self> {
        Self::new(self.r_axis.clone(), self.c_axis.clone(), self.surface.clone(), c_max, r_min)
    }

    fn at(&self, ri: usize, ci: usize) -> T {
        match &self.surface {
            QosSurface::Table(q) => q[ri * self.c_axis.len() + ci],
            QosSurface::SaturatingLinear { a, b, c } => {
                let r = self.r_axis[ri];
                *a * r / (r + *b) - *c * self.c_axis[ci]
            }
        }
    }

    /// `Q(r, c)`. Tabulated surfaces only answer at grid points; parametric
    /// ones anywhere inside the axis bounds.
    pub fn evaluate_qos(&self, r: T, c: T) -> Result<T> {
        match &self.surface {
            QosSurface::Table(_) => {
                let ri = self.r_axis.iter().position(|&v| v == r);
                let ci = self.c_axis.iter().position(|&v| v == c);
                match (ri, ci) {
                    (Some(ri), Some(ci)) => Ok(self.at(ri, ci)),
                    _ => Err(MetricsError::arg(format!("({r:?}, {c:?}) is not a grid point"))),
                }
            }
            QosSurface::SaturatingLinear { a, b, c: cc } => {
                let (r_lo, r_hi) = (self.r_axis[0], self.r_axis[self.r_axis.len() - 1]);
                let (c_lo, c_hi) = (self.c_axis[0], self.c_axis[self.c_axis.len() - 1]);
                if r < r_lo || r > r_hi || c < c_lo || c > c_hi {
                    return Err(MetricsError::arg(format!("({r:?}, {c:?}) is outside the axis bounds")));
                }
                Ok(*a * r / (r + *b) - *cc * c)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSolution<T> {
    pub r_star: T,
    pub c_star: T,
    pub q_star: T,
    pub r_index: usize,
    pub c_index: usize,
    pub feasible_count: usize,
}

/// Maximizes `Q` over grid points with `C <= c_max` and `R >= r_min`.
/// Equal values resolve to the smallest `c`, then the smallest `r`.
pub fn solve_equilibrium<T: Field>(problem: &EquilibriumProblem<T>) -> Result<EquilibriumSolution<T>> {
    let c_ok = problem.c_axis.iter().take_while(|&&c| c <= problem.c_max).count();
    let r_from = problem.r_axis.iter().take_while(|&&r| r < problem.r_min).count();
    let r_ok = problem.r_axis.len() - r_from;
    if c_ok == 0 || r_ok == 0 {
        let mut binding = Vec::new();
        if c_ok == 0 {
            binding.push(format!("cost ceiling c_max={:?} is below every cost grid value", problem.c_max));
        }
        if r_ok == 0 {
            binding.push(format!("resource floor r_min={:?} is above every resource grid value", problem.r_min));
        }
        return Err(MetricsError::Infeasible(binding.join("; ")));
    }
    let mut best: Option<(usize, usize, T)> = None;
    for ci in 0..c_ok {
        for ri in r_from..problem.r_axis.len() {
            let q = problem.at(ri, ci);
            if best.is_none_or(|(_, _, b)| q > b) {
                best = Some((ri, ci, q));
            }
        }
    }
    let (ri, ci, q) = best.expect("feasible set is non-empty");
    Ok(EquilibriumSolution {
        r_star: problem.r_axis[ri],
        c_star: problem.c_axis[ci],
        q_star: q,
        r_index: ri,
        c_index: ci,
        feasible_count: c_ok * r_ok,
    })
}

/// Finite differences of `Q` one grid step away from a cell. Missing sides
/// sit on the grid boundary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Marginal<T> {
    pub backward: Option<T>,
    pub forward: Option<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport<T> {
    pub family: &'static str,
    pub solution: EquilibriumSolution<T>,
    pub binding_constraints: Vec<&'static str>,
    pub marginal_r: Marginal<T>,
    pub marginal_c: Marginal<T>,
    /// `ΔQ` for each successive R step along the optimal cost column.
    pub r_marginal_profile: Vec<T>,
    /// Each additional R step buys no more than the previous one, and
    /// strictly less at least once.
    pub diminishing_returns: bool,
}

fn marginal<T: Field>(len: usize, i: usize, q: impl Fn(usize) -> T) -> Marginal<T> {
    Marginal {
        backward: (i > 0).then(|| q(i) - q(i - 1)),
        forward: (i + 1 < len).then(|| q(i + 1) - q(i)),
    }
}

pub fn equilibrium_report<T: Field>(
    problem: &EquilibriumProblem<T>,
    solution: &EquilibriumSolution<T>,
) -> EquilibriumReport<T> {
    let (ri, ci) = (solution.r_index, solution.c_index);
    let mut binding = Vec::new();
    if problem.c_axis.get(ci + 1).is_some_and(|&c| c > problem.c_max) {
        binding.push("c_max");
    }
    if ri > 0 && problem.r_axis[ri - 1] < problem.r_min {
        binding.push("r_min");
    }
    let profile: Vec<T> = (1..problem.r_axis.len())
        .map(|k| problem.at(k, ci) - problem.at(k - 1, ci))
        .collect();
    let diminishing = profile.len() >= 2
        && profile.windows(2).all(|w| w[1] <= w[0])
        && profile.windows(2).any(|w| w[1] < w[0]);
    EquilibriumReport {
        family: problem.surface.family(),
        solution: solution.clone(),
        binding_constraints: binding,
        marginal_r: marginal(problem.r_axis.len(), ri, |k| problem.at(k, ci)),
        marginal_c: marginal(problem.c_axis.len(), ci, |k| problem.at(ri, k)),
        r_marginal_profile: profile,
        diminishing_returns: diminishing,
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SurfaceFile {
    Nested(Vec<Vec<f64>>),
    Flat(Vec<f64>),
    Family {
        family: String,
        coefficients: BTreeMap<String, f64>,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    r_axis: Vec<f64>,
    c_axis: Vec<f64>,
    q_surface: SurfaceFile,
    c_max: f64,
    r_min: f64,
}

/// Parses a problem file: axes, bounds, and `q_surface` as a row-major table
/// (flat or nested) or `{"family": ..., "coefficients": {...}}`.
pub fn parse_problem(json: &str) -> Result<EquilibriumProblem<f64>> {
    let file: ProblemFile =
        serde_json::from_str(json).map_err(|e| MetricsError::arg(format!("problem file: {e}")))?;
    let surface = match file.q_surface {
        SurfaceFile::Flat(q) => QosSurface::Table(q),
        SurfaceFile::Nested(rows) => {
            if rows.iter().any(|r| r.len() != file.c_axis.len()) {
                return Err(MetricsError::arg("every q_surface row must have one value per c_axis entry"));
            }
            QosSurface::Table(rows.into_iter().flatten().collect())
        }
        SurfaceFile::Family { family, coefficients } => match family.as_str() {
            "saturating_linear" => {
                let get = |k: &str| {
                    coefficients
                        .get(k)
                        .copied()
                        .ok_or_else(|| MetricsError::arg(format!("saturating_linear needs coefficient `{k}`")))
                };
                if let Some(extra) = coefficients.keys().find(|k| !["a", "b", "c"].contains(&k.as_str())) {
                    return Err(MetricsError::arg(format!("unknown saturating_linear coefficient `{extra}`")));
                }
                QosSurface::SaturatingLinear { a: get("a")?, b: get("b")?, c: get("c")? }
            }
            other => return Err(MetricsError::arg(format!("unknown surface family `{other}`"))),
        },
    };
    EquilibriumProblem::new(file.r_axis, file.c_axis, surface, file.c_max, file.r_min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    fn axis(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64).collect()
    }

    #[test]
    fn lookups() {
        let p = EquilibriumProblem::new(vec![1.0], vec![1.0], QosSurface::Table(vec![5.0]), 1.0, 1.0).unwrap();
        assert_eq!(p.evaluate_qos(1.0, 1.0).unwrap(), 5.0);
        assert!(p.evaluate_qos(1.5, 1.0).unwrap_err().is_argument_error());

        let sat = QosSurface::SaturatingLinear { a: 1.0f64, b: 1.0, c: 0.01 };
        let p = EquilibriumProblem::new(vec![0.0, 1.0, 2.0], vec![0.0, 10.0, 20.0], sat, 20.0, 0.0).unwrap();
        assert!((p.evaluate_qos(1.0, 10.0).unwrap() - 0.4).abs() < 1e-15);
        assert!(p.evaluate_qos(3.0, 10.0).is_err());
    }

    #[test]
    fn exact_parametric_value() {
        let r = |n, d| Ratio::<i128>::new(n, d);
        let sat = QosSurface::SaturatingLinear { a: r(1, 1), b: r(1, 1), c: r(1, 100) };
        let p = EquilibriumProblem::new(vec![r(1, 1)], vec![r(10, 1)], sat, r(10, 1), r(0, 1)).unwrap();
        assert_eq!(p.evaluate_qos(r(1, 1), r(10, 1)).unwrap(), r(2, 5));
    }

    #[test]
    fn rejects_bad_axes_and_tables() {
        let t = |n| QosSurface::Table(vec![0.0; n]);
        assert!(EquilibriumProblem::new(vec![0.0, 0.0], vec![0.0], t(2), 1.0, 0.0).is_err());
        assert!(EquilibriumProblem::new(vec![0.0, 1.0], vec![0.0], t(3), 1.0, 0.0).is_err());
        assert!(EquilibriumProblem::new(vec![0.0], vec![0.0], QosSurface::Table(vec![f64::NAN]), 1.0, 0.0).is_err());
        assert!(EquilibriumProblem::new(vec![], vec![0.0], t(0), 1.0, 0.0).is_err());
    }

    #[test]
    fn monotone_surface_optimum() {
        // increasing in R, decreasing in C
        let (r, c) = (axis(5), axis(4));
        let q = (0..20).map(|k| (k / 4) as f64 - (k % 4) as f64).collect();
        let p = EquilibriumProblem::new(r, c, QosSurface::Table(q), 2.0, 1.0).unwrap();
        let s = solve_equilibrium(&p).unwrap();
        assert_eq!((s.r_star, s.c_star, s.q_star, s.feasible_count), (4.0, 0.0, 4.0, 12));
    }

    #[test]
    fn planted_interior_maximum() {
        let mut q = vec![0.0; 100];
        q[3 * 10 + 6] = 9.0;
        q[8 * 10 + 9] = 20.0; // outside the cost ceiling
        let p = EquilibriumProblem::new(axis(10), axis(10), QosSurface::Table(q), 7.0, 2.0).unwrap();
        let s = solve_equilibrium(&p).unwrap();
        assert_eq!((s.r_index, s.c_index, s.q_star), (3, 6, 9.0));
    }

    #[test]
    fn ties_prefer_low_cost_then_low_resources() {
        let p = EquilibriumProblem::new(axis(3), axis(3), QosSurface::Table(vec![1.0; 9]), 2.0, 1.0).unwrap();
        let s = solve_equilibrium(&p).unwrap();
        assert_eq!((s.r_star, s.c_star), (1.0, 0.0));
    }

    #[test]
    fn infeasible_names_constraint() {
        let p = EquilibriumProblem::new(vec![1.0, 2.0], vec![5.0, 6.0], QosSurface::Table(vec![0.0; 4]), 4.0, 1.0).unwrap();
        match solve_equilibrium(&p) {
            Err(MetricsError::Infeasible(msg)) => assert!(msg.contains("c_max") && !msg.contains("r_min")),
            other => panic!("{other:?}"),
        }
        let p = p.with_bounds(10.0, 3.0).unwrap();
        match solve_equilibrium(&p) {
            Err(MetricsError::Infeasible(msg)) => assert!(msg.contains("r_min")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn report_marginals() {
        // Q = sqrt(R) - 0.1 C, concave in R
        let r = axis(6);
        let c = axis(4);
        let q: Vec<f64> = (0..24).map(|k| ((k / 4) as f64).sqrt() - 0.1 * (k % 4) as f64).collect();
        let p = EquilibriumProblem::new(r, c, QosSurface::Table(q), 3.0, 0.0).unwrap();
        let s = solve_equilibrium(&p).unwrap();
        assert_eq!((s.r_index, s.c_index), (5, 0));
        let rep = equilibrium_report(&p, &s);
        assert!(rep.marginal_r.forward.is_none() && rep.marginal_r.backward.is_some());
        assert!(rep.marginal_c.backward.is_none() && rep.marginal_c.forward.is_some());
        assert!(rep.diminishing_returns);
        let prof = &rep.r_marginal_profile;
        assert!(prof[1] > prof[2] && prof[2] > prof[3]);
        assert!(rep.binding_constraints.is_empty());

        let interior = EquilibriumProblem::new(axis(5), axis(5), QosSurface::Table(
            (0..25).map(|k| -(((k / 5) as f64 - 2.0).powi(2)) - (((k % 5) as f64 - 2.0).powi(2))).collect(),
        ), 4.0, 0.0).unwrap();
        let rep = equilibrium_report(&interior, &solve_equilibrium(&interior).unwrap());
        assert!(rep.marginal_r.forward.is_some() && rep.marginal_r.backward.is_some());
        assert!(rep.marginal_c.forward.is_some() && rep.marginal_c.backward.is_some());

        // Q = C - R: wants more cost and fewer resources than allowed
        let q = (0..16).map(|k| (k % 4) as f64 - (k / 4) as f64).collect();
        let p = EquilibriumProblem::new(axis(4), axis(4), QosSurface::Table(q), 1.5, 2.0).unwrap();
        let s = solve_equilibrium(&p).unwrap();
        assert_eq!((s.r_index, s.c_index), (2, 1));
        assert_eq!(equilibrium_report(&p, &s).binding_constraints, vec!["c_max", "r_min"]);
    }

    #[test]
    fn problem_files() {
        let nested = r#"{"r_axis":[1,2],"c_axis":[1,2,3],"q_surface":[[1,2,3],[4,5,6]],"c_max":2,"r_min":1}"#;
        let flat = r#"{"r_axis":[1,2],"c_axis":[1,2,3],"q_surface":[1,2,3,4,5,6],"c_max":2,"r_min":1}"#;
        assert_eq!(parse_problem(nested).unwrap(), parse_problem(flat).unwrap());
        let p = parse_problem(nested).unwrap();
        assert_eq!(p.evaluate_qos(2.0, 1.0).unwrap(), 4.0);
        let fam = r#"{"r_axis":[1,2],"c_axis":[0,10],"q_surface":{"family":"saturating_linear","coefficients":{"a":1,"b":1,"c":0.01}},"c_max":10,"r_min":0}"#;
        assert_eq!(parse_problem(fam).unwrap().surface().family(), "saturating_linear");
        let bad = r#"{"r_axis":[1],"c_axis":[0],"q_surface":{"family":"cubic","coefficients":{}},"c_max":1,"r_min":0}"#;
        assert!(parse_problem(bad).unwrap_err().is_argument_error());
        let ragged = r#"{"r_axis":[1,2],"c_axis":[1,2],"q_surface":[[1,2],[3]],"c_max":2,"r_min":1}"#;
        assert!(parse_problem(ragged).is_err());
    }

    proptest! {
        #[test]
        fn tightening_never_helps(
            q in proptest::collection::vec(-1000i64..1000, 64),
            c_hi in 0i64..8, c_lo in 0i64..8, r_lo in 0i64..8, r_hi in 0i64..8,
        ) {
            let q: Vec<f64> = q.into_iter().map(|v| v as f64).collect();
            let (c_loose, c_tight) = (c_hi.max(c_lo) as f64, c_hi.min(c_lo) as f64);
            let (r_loose, r_tight) = (r_lo.min(r_hi) as f64, r_lo.max(r_hi) as f64);
            let loose = EquilibriumProblem::new(axis(8), axis(8), QosSurface::Table(q), c_loose, r_loose).unwrap();
            let tight = loose.with_bounds(c_tight, r_tight).unwrap();
            let a = solve_equilibrium(&loose).unwrap();
            let b = solve_equilibrium(&tight).unwrap();
            prop_assert!(b.q_star <= a.q_star);
            prop_assert_eq!(solve_equilibrium(&loose).unwrap(), a);
        }
    }
}
