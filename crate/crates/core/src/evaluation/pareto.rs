use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// A labelled vector of per-domain metric values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub label: String,
    pub values: Vec<f64>,
}

impl ParetoPoint {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Self {
        ParetoPoint {
            label: label.into(),
            values,
        }
    }
}

/// `a` dominates `b`: no worse everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| x >= y)
        && a.iter().zip(b).any(|(x, y)| x > y)
}

/// `true` for every point not dominated by another point.
pub fn pareto_mask(points: &[ParetoPoint]) -> Vec<bool> {
    points
        .iter()
        .map(|p| !points.iter().any(|q| dominates(&q.values, &p.values)))
        .collect()
}

/// The non-dominated points, in input order.
pub fn pareto_front(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    points
        .iter()
        .zip(pareto_mask(points))
        .filter(|(_, keep)| *keep)
        .map(|(p, _)| p.clone())
        .collect()
}

/// `label,w_1,...,w_D,on_front` rows.
pub fn pareto_csv(points: &[ParetoPoint]) -> String {
    let dims = points.first().map_or(0, |p| p.values.len());
    let mut out = String::from("label");
    for d in 1..=dims {
        write!(out, ",w_{d}").unwrap();
    }
    out.push_str(",on_front\n");
    for (p, on) in points.iter().zip(pareto_mask(points)) {
        out.push_str(&p.label);
        for v in &p.values {
            write!(out, ",{v}").unwrap();
        }
        writeln!(out, ",{on}").unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(values: &[&[f64]]) -> Vec<ParetoPoint> {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| ParetoPoint::new(format!("p{i}"), v.to_vec()))
            .collect()
    }

    #[test]
    fn full_dominance() {
        let front = pareto_front(&pts(&[&[1.0, 1.0], &[0.5, 0.5]]));
        assert_eq!(front.len(), 1);
        assert_eq!(front[0].label, "p0");
    }

    #[test]
    fn trade_offs_all_survive() {
        let p = pts(&[&[1.0, 0.0], &[0.0, 1.0], &[0.5, 0.5]]);
        assert_eq!(pareto_front(&p), p);
    }

    #[test]
    fn duplicates_both_kept() {
        assert_eq!(pareto_front(&pts(&[&[0.5, 0.5], &[0.5, 0.5]])).len(), 2);
    }

    #[test]
    fn empty_input() {
        assert!(pareto_front(&[]).is_empty());
    }

    #[test]
    fn csv_layout() {
        let csv = pareto_csv(&pts(&[&[1.0, 0.25], &[0.5, 0.2]]));
        assert_eq!(
            csv,
            "label,w_1,w_2,on_front\np0,1,0.25,true\np1,0.5,0.2,false\n"
        );
    }
}
