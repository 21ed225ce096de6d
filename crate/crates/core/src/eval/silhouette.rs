use std::collections::BTreeMap;

use log::warn;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Silhouette {
    pub score: f64,
    /// Classes with a single point, left out of the score.
    pub excluded_classes: Vec<usize>,
    /// Every pairwise distance was zero; `score` is reported as 0.
    pub degenerate: bool,
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Mean silhouette coefficient with Euclidean distance.
pub fn silhouette(coords: &[[f64; 2]], labels: &[usize]) -> Result<Silhouette> {
    if coords.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} points but {} labels",
            coords.len(),
            labels.len()
        )));
    }
    let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        members.entry(l).or_default().push(i);
    }
    let excluded_classes: Vec<usize> = members
        .iter()
        .filter(|(_, v)| v.len() < 2)
        .map(|(&c, _)| c)
        .collect();
    if !excluded_classes.is_empty() {
        warn!("silhouette: excluding singleton classes {excluded_classes:?}");
    }
    members.retain(|_, v| v.len() >= 2);
    if members.len() < 2 {
        return Err(Error::Data("silhouette needs at least two classes with >= 2 points".into()));
    }

    let mut total = 0.0;
    let mut count = 0usize;
    let mut any_distance = false;
    for (&c, idx) in &members {
        for &i in idx {
            let a = idx
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| dist(&coords[i], &coords[j]))
                .sum::<f64>()
                / (idx.len() - 1) as f64;
            let b = members
                .iter()
                .filter(|(&o, _)| o != c)
                .map(|(_, other)| {
                    other.iter().map(|&j| dist(&coords[i], &coords[j])).sum::<f64>() / other.len() as f64
                })
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                any_distance = true;
                total += (b - a) / denom;
            }
            count += 1;
        }
    }
    if !any_distance {
        warn!("silhouette: all points coincide");
        return Ok(Silhouette {
            score: 0.0,
            excluded_classes,
            degenerate: true,
        });
    }
    Ok(Silhouette {
        score: total / count as f64,
        excluded_classes,
        degenerate: false,
    })
}
