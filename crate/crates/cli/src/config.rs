//! Experiment configuration shared by the command line and the library API.

use std::path::PathBuf;

use clap::ValueEnum;
use lseig_core::eigsolve::FormulationTag;
use lseig_core::fespace::Family;
use lseig_core::mesh::DomainKind;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Apriori,
    CurlFailure,
    Adaptive,
}

/// Discretizations available to the a priori study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    #[value(name = "f1")]
    F1,
    #[value(name = "f1star")]
    F1Star,
    #[value(name = "llstar")]
    LlStar,
    /// Conforming P1 Galerkin.
    #[value(name = "pep")]
    Pep,
    /// Mixed RT0–P0.
    #[value(name = "pemd")]
    Pemd,
}

impl Method {
    pub fn tag(self) -> Option<FormulationTag> {
        match self {
            Method::F1 => Some(FormulationTag::F1),
            Method::F1Star => Some(FormulationTag::F1Star),
            Method::LlStar => Some(FormulationTag::LlStar),
            Method::Pep | Method::Pemd => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::F1 => "f1",
            Method::F1Star => "f1star",
            Method::LlStar => "llstar",
            Method::Pep => "pep",
            Method::Pemd => "pemd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SigmaArg {
    #[value(name = "rt0")]
    Rt0,
    #[value(name = "bdm1")]
    Bdm1,
    #[value(name = "cg1vec")]
    Cg1Vec,
}

impl From<SigmaArg> for Family {
    fn from(s: SigmaArg) -> Family {
        match s {
            SigmaArg::Rt0 => Family::Rt0,
            SigmaArg::Bdm1 => Family::Bdm1,
            SigmaArg::Cg1Vec => Family::Cg1Vec,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DomainArg {
    #[value(name = "square")]
    Square,
    #[value(name = "lshape")]
    LShape,
}

impl From<DomainArg> for DomainKind {
    fn from(d: DomainArg) -> DomainKind {
        match d {
            DomainArg::Square => DomainKind::UnitSquare,
            DomainArg::LShape => DomainKind::LShape,
        }
    }
}

pub fn domain_name(kind: DomainKind) -> &'static str {
    match kind {
        DomainKind::UnitSquare => "square",
        DomainKind::LShape => "lshape",
    }
}

pub const DEFAULT_MAX_DOFS: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub method: Method,
    pub sigma: Family,
    pub domain: DomainKind,
    /// Level `ℓ` is the criss-cross mesh refined uniformly `ℓ` times, `h = 2^-ℓ`.
    pub start_level: usize,
    pub levels: usize,
    pub num_eigs: usize,
    pub max_dofs: usize,
    pub thetas: Vec<f64>,
    pub out_dir: Option<PathBuf>,
    pub quad_degree: usize,
    pub dump_mesh: bool,
    pub dump_matrices: bool,
}

impl ExperimentConfig {
    pub fn apriori(method: Method, sigma: Family, domain: DomainKind, levels: usize) -> Self {
        ExperimentConfig {
            experiment: Experiment::Apriori,
            method,
            sigma,
            domain,
            start_level: 2,
            levels,
            num_eigs: 1,
            max_dofs: DEFAULT_MAX_DOFS,
            thetas: Vec::new(),
            out_dir: None,
            quad_degree: 0,
            dump_mesh: false,
            dump_matrices: false,
        }
    }

    pub fn curl_failure(levels: usize) -> Self {
        ExperimentConfig {
            experiment: Experiment::CurlFailure,
            method: Method::F1,
            sigma: Family::Cg1Vec,
            domain: DomainKind::LShape,
            start_level: 1,
            num_eigs: 5,
            ..Self::apriori(Method::F1, Family::Cg1Vec, DomainKind::LShape, levels)
        }
    }

    pub fn adaptive(thetas: Vec<f64>, max_dofs: usize) -> Self {
        ExperimentConfig {
            experiment: Experiment::Adaptive,
            start_level: 0,
            levels: 1,
            max_dofs,
            thetas,
            ..Self::apriori(Method::F1, Family::Rt0, DomainKind::LShape, 1)
        }
    }

    pub fn with_out_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.out_dir = Some(dir.into());
        self
    }

    pub fn with_start_level(mut self, level: usize) -> Self {
        self.start_level = level;
        self
    }

    pub fn with_num_eigs(mut self, k: usize) -> Self {
        self.num_eigs = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(CliError::Config(msg.to_string()));
        if self.num_eigs == 0 {
            return fail("at least one eigenvalue is required");
        }
        match self.experiment {
            Experiment::Apriori => {
                if self.levels < 2 {
                    return fail("rate fits need at least two levels");
                }
                if self.method == Method::LlStar && self.sigma == Family::Cg1Vec {
                    return fail("llstar needs an H(div) conforming vector space");
                }
            }
            Experiment::CurlFailure => {
                if self.domain != DomainKind::LShape {
                    return fail("the curl experiment runs on the L-shape");
                }
                if self.levels < 3 {
                    return fail("stagnation detection needs at least three levels");
                }
            }
            Experiment::Adaptive => {
                if self.domain != DomainKind::LShape || self.method != Method::F1 || self.sigma != Family::Rt0 {
                    return fail("the adaptive study uses f1 with rt0 on the L-shape");
                }
                if let Some(t) = self.thetas.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
                    return Err(CliError::Config(format!("bulk parameter {t} outside (0, 1]")));
                }
                if self.max_dofs < 100 {
                    return fail("dof budget too small");
                }
            }
        }
        Ok(())
    }

    /// Bulk parameters to run: the requested ones followed by `1.0`.
    pub fn theta_list(&self) -> Vec<f64> {
        let mut v = self.thetas.clone();
        if !v.contains(&1.0) {
            v.push(1.0);
        }
        v
    }
}
