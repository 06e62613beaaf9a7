//! Report envelopes and artifact writers.

use std::fs;
use std::path::Path;

use serde::Serialize;
use ymr_core::fields::{connection_form, plaquette_curvature};
use ymr_core::solver::hypothesis_norms;
use ymr_core::{BallRegion, BoundaryCondition, FormSpace, Group, GroupKind, LinkField};

use crate::error::CliError;

/// Smallness-hypothesis norms of a field, on the configured region or the
/// whole lattice.
#[derive(Debug, Clone, Serialize)]
pub struct MeasuredNorms {
    pub domain: &'static str,
    pub curvature_l2: f64,
    pub a_l4: f64,
    pub a_sobolev1: f64,
    /// Only on a region.
    pub boundary_half: Option<f64>,
}

pub fn measure<G: Group>(u: &LinkField<G>, region: Option<&BallRegion>) -> Option<MeasuredNorms> {
    match region {
        Some(r) => hypothesis_norms(u, r).ok().map(|n| MeasuredNorms {
            domain: "region",
            curvature_l2: n.curvature_l2,
            a_l4: n.a_l4,
            a_sobolev1: n.a_sobolev1,
            boundary_half: Some(n.boundary_half),
        }),
        None => {
            let space = FormSpace::whole(u.complex(), BoundaryCondition::Tangential);
            let a = connection_form(u).ok()?;
            let f = plaquette_curvature(u).ok()?;
            Some(MeasuredNorms {
                domain: "lattice",
                curvature_l2: space.norm_l2(&f),
                a_l4: space.norm_l4(&a),
                a_sobolev1: space.norm_sobolev1(&a),
                boundary_half: None,
            })
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Report<'a, T: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub config_hash: &'a str,
    pub seed: u64,
    pub member: usize,
    pub member_seed: u64,
    pub group: GroupKind,
    pub status: &'a str,
    /// Norms of the input field.
    pub input_norms: Option<MeasuredNorms>,
    /// Norms of the produced field, when there is one.
    pub output_norms: Option<MeasuredNorms>,
    pub result: T,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
