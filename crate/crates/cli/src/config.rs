//! Run configurations and suite files.
//!
//! A [`RunConfig`] names one tester together with everything it needs. It is
//! validated in full by [`RunConfig::prepare`] before any flow is integrated,
//! so configuration mistakes surface as exit code 64 rather than midway
//! through a suite.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use varinv_core::algebra::{CharacterSpec, SquareMatrix};
use varinv_core::energies::{Catalog, ConvexFn, EnergyDensity, EnergySpec};
use varinv_core::functional::{default_cells, BoxDomain, DeformationMap};
use varinv_core::testers::{
    legh_domain, LeghMode, LhMode, SamplingPlan, Side, Subject, TestPoint, ThetaProblem, DEFAULT_SAMPLES,
    DEFAULT_TOLERANCE,
};
use varinv_core::{FieldSpec, GroupSpec, Verdict};

use crate::CliError;

/// Environment variable that replaces every configured seed.
pub const SEED_ENV: &str = "VARINV_SEED";

fn left() -> Side {
    Side::Left
}

fn inequality() -> LeghMode {
    LeghMode::Inequality
}

fn all_pairs() -> LhMode {
    LhMode::AllPairs
}

fn default_starts() -> usize {
    64
}

fn default_levels() -> usize {
    4
}

/// The tester to run and its own parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestSpec {
    LowerInvariance {
        #[serde(default = "left")]
        side: Side,
    },
    NullLagrangian {
        #[serde(default = "left")]
        side: Side,
    },
    CharacterNll {
        character: CharacterSpec,
    },
    PolyconvexJensen {
        g: ConvexFn,
        w: Vec<EnergySpec>,
    },
    Quasiconvexity,
    FlowConsistency,
    Conjugation,
    ExpInvariance {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subject: Option<Subject>,
    },
    Semicontinuity {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subject: Option<Subject>,
        #[serde(default = "default_levels")]
        levels: usize,
    },
    Legh {
        #[serde(default = "inequality")]
        mode: LeghMode,
    },
    LhPointwise {
        #[serde(default = "all_pairs")]
        mode: LhMode,
        #[serde(default = "default_starts")]
        starts: usize,
    },
    Parhl,
    FirstVariation {
        map: DeformationMap,
        field: FieldSpec,
    },
    Equilibrium {
        map: DeformationMap,
    },
    ThetaConvexity {
        problem: ThetaProblem,
    },
}

/// Names and one-line descriptions of the testers, sorted by name.
pub const TESTS: &[(&str, &str)] = &[
    ("character_nll", "log of a group character is a null lagrangian of its local group"),
    ("conjugation", "right-invariance margin at F equals det F times the left margin of the conjugated flow"),
    ("equilibrium", "strong-form equilibrium residual div dW(grad u)"),
    ("exp_invariance", "I(u o phi) = I(u) along flows of the group"),
    ("first_variation", "first inner variation of I, direct quadrature against finite differences"),
    ("flow_consistency", "quasiconvexity and left lower-invariance margins coincide on shared flows"),
    ("legh", "generalized rank-one inequality for a test field"),
    ("lh_pointwise", "pointwise Legendre-Hadamard minimum over unit directions"),
    ("lower_invariance", "int W(F grad phi) >= |E| W(F) (left) or int W(grad phi F) >= |E| W(F) (right)"),
    ("null_lagrangian", "int W(F grad phi) = |E| W(F) for every flow of the group"),
    ("parhl", "rank-one Hessian identity H(a x b, a x b) = 0 satisfied by null lagrangians"),
    ("polyconvex_jensen", "Jensen gap of a convex function of null lagrangians"),
    ("quasiconvexity", "int W(F + grad eta) >= |E| W(F) for compactly supported eta"),
    ("semicontinuity", "I(u o phi_tau) - I(u) stays above -tolerance as tau shrinks"),
    ("theta_convexity", "midpoint convexity of the one-dimensional reparametrization functional"),
];

/// Group kinds with descriptions, sorted by name.
pub const GROUPS: &[(&str, &str)] = &[
    ("full_diff", "all compactly supported diffeomorphisms, jets GL+"),
    ("separable1d", "increasing diffeomorphisms of an interval, jets (0, inf)"),
    ("shear", "shears along e_p driven by x_q, jets I + s E_pq"),
    ("symplectic2d", "area preserving maps of the plane, jets SL_2"),
    ("volume_preserving", "volume preserving diffeomorphisms, jets SL_n"),
];

impl TestSpec {
    pub fn name(&self) -> &'static str {
        match self {
            TestSpec::LowerInvariance { .. } => "lower_invariance",
            TestSpec::NullLagrangian { .. } => "null_lagrangian",
            TestSpec::CharacterNll { .. } => "character_nll",
            TestSpec::PolyconvexJensen { .. } => "polyconvex_jensen",
            TestSpec::Quasiconvexity => "quasiconvexity",
            TestSpec::FlowConsistency => "flow_consistency",
            TestSpec::Conjugation => "conjugation",
            TestSpec::ExpInvariance { .. } => "exp_invariance",
            TestSpec::Semicontinuity { .. } => "semicontinuity",
            TestSpec::Legh { .. } => "legh",
            TestSpec::LhPointwise { .. } => "lh_pointwise",
            TestSpec::Parhl => "parhl",
            TestSpec::FirstVariation { .. } => "first_variation",
            TestSpec::Equilibrium { .. } => "equilibrium",
            TestSpec::ThetaConvexity { .. } => "theta_convexity",
        }
    }

    fn needs_energy(&self) -> bool {
        !matches!(
            self,
            TestSpec::CharacterNll { .. } | TestSpec::PolyconvexJensen { .. } | TestSpec::ThetaConvexity { .. }
        )
    }

    fn needs_group(&self) -> bool {
        matches!(
            self,
            TestSpec::LowerInvariance { .. }
                | TestSpec::NullLagrangian { .. }
                | TestSpec::CharacterNll { .. }
                | TestSpec::PolyconvexJensen { .. }
                | TestSpec::FlowConsistency
                | TestSpec::Conjugation
                | TestSpec::ExpInvariance { .. }
                | TestSpec::Semicontinuity { .. }
        )
    }

    fn own_dim(&self) -> Option<usize> {
        match self {
            TestSpec::CharacterNll { character } => Some(character.dim()),
            TestSpec::FirstVariation { map, .. } | TestSpec::Equilibrium { map } => Some(map.dim()),
            TestSpec::ThetaConvexity { .. } => Some(1),
            _ => None,
        }
    }
}

/// One check: tester, energy, group, test point, domain and sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub test: TestSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<EnergySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<TestPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<BoxDomain>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Where `check` writes the report; standard output when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}

/// A validated configuration, ready to run.
pub struct Prepared {
    pub config: RunConfig,
    pub energy: Option<Catalog>,
    pub group: Option<GroupSpec>,
    pub point: TestPoint,
    pub domain: BoxDomain,
    pub plan: SamplingPlan,
}

fn config_error(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{key}: {msg}"))
}

impl RunConfig {
    pub fn new(test: TestSpec) -> Self {
        Self {
            test,
            energy: None,
            group: None,
            point: None,
            domain: None,
            samples: DEFAULT_SAMPLES,
            seed: 0,
            tolerance: DEFAULT_TOLERANCE,
            output: None,
        }
    }

    /// Ambient dimension implied by the configuration, 2 if nothing fixes it.
    pub fn dim(&self) -> usize {
        self.point
            .as_ref()
            .map(TestPoint::dim)
            .or(self.group.map(|g| g.n))
            .or(self.domain.as_ref().map(BoxDomain::dim))
            .or(self.test.own_dim())
            .unwrap_or(2)
    }

    /// Hex SHA-256 of the canonical JSON of the configuration, output path
    /// excluded.
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let bytes = serde_json::to_vec(&c).expect("configs serialize");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Applies [`SEED_ENV`] if it is set.
    pub fn apply_seed_override(&mut self) -> Result<(), CliError> {
        if let Some(seed) = seed_override()? {
            self.seed = seed;
        }
        Ok(())
    }

    /// Checks names, dimensions and parameters without running anything.
    pub fn prepare(&self) -> Result<Prepared, CliError> {
        let n = self.dim();
        if !(1..=3).contains(&n) {
            return Err(config_error("point", format!("dimension {n} is outside 1..=3")));
        }
        if !(self.tolerance >= 0.0 && self.tolerance.is_finite()) {
            return Err(config_error("tolerance", "must be finite and non-negative"));
        }
        if self.samples == 0 {
            return Err(config_error("samples", "must be positive"));
        }
        let energy = match (&self.energy, self.test.needs_energy()) {
            (Some(e), _) => Some(Catalog::new(e.clone()).map_err(|e| config_error("energy", e))?),
            (None, true) => return Err(config_error("energy", format!("required by {}", self.test.name()))),
            (None, false) => None,
        };
        if let Some(d) = energy.as_ref().and_then(Catalog::fixed_dim) {
            if d != n {
                return Err(config_error("energy", format!("acts on {d}x{d} matrices, configuration is {n}-dimensional")));
            }
        }
        let group = match (self.group, self.test.needs_group()) {
            (Some(g), _) => {
                g.validate().map_err(|e| config_error("group", e))?;
                if g.n != n {
                    return Err(config_error("group.n", format!("{} does not match dimension {n}", g.n)));
                }
                Some(g)
            }
            (None, true) => return Err(config_error("group", format!("required by {}", self.test.name()))),
            (None, false) => None,
        };
        let point = self.point.clone().unwrap_or_else(|| TestPoint::at(SquareMatrix::identity(n)));
        if point.dim() != n {
            return Err(config_error("point.f", format!("is {0}x{0}, configuration is {n}-dimensional", point.dim())));
        }
        if let Some(g) = &group {
            if !matches!(self.test, TestSpec::Conjugation | TestSpec::ExpInvariance { .. } | TestSpec::Semicontinuity { .. }) {
                let check = g.jet_member(&point.f).map_err(|e| config_error("point.f", e))?;
                if !check.member {
                    return Err(config_error(
                        "point.f",
                        format!("not a jet of {} (deviation {:e})", g.kind.label(), check.deviation),
                    ));
                }
            }
        }
        let domain = match (&self.domain, &self.test) {
            (Some(d), _) => d.clone(),
            (None, TestSpec::Legh { .. }) => legh_domain(n).map_err(|e| config_error("domain", e))?,
            (None, _) => BoxDomain::unit(n).with_cells(default_cells(n)).map_err(|e| config_error("domain", e))?,
        };
        if domain.dim() != n {
            return Err(config_error("domain", format!("is {}-dimensional, configuration is {n}-dimensional", domain.dim())));
        }
        self.validate_test(n, &point)?;
        let plan = SamplingPlan::new(self.samples, self.seed).with_tolerance(self.tolerance);
        Ok(Prepared { config: self.clone(), energy, group, point, domain, plan })
    }

    fn validate_test(&self, n: usize, point: &TestPoint) -> Result<(), CliError> {
        match &self.test {
            TestSpec::CharacterNll { character } => {
                character.group().ok_or_else(|| config_error("test.character", "invalid character parameters"))?;
            }
            TestSpec::PolyconvexJensen { w, .. } => {
                if w.is_empty() {
                    return Err(config_error("test.w", "needs at least one null lagrangian"));
                }
                for (k, e) in w.iter().enumerate() {
                    Catalog::new(e.clone()).map_err(|err| config_error(&format!("test.w[{k}]"), err))?;
                }
            }
            TestSpec::ExpInvariance { subject: Some(s) } | TestSpec::Semicontinuity { subject: Some(s), .. } => {
                if subject_dim(s) != n {
                    return Err(config_error("test.subject", "dimension mismatch"));
                }
            }
            TestSpec::Quasiconvexity if point.f.det() <= 0.0 => {
                return Err(config_error("point.f", "det F must be positive"));
            }
            TestSpec::FirstVariation { field, .. } if field_dim(field).is_some_and(|d| d != n) => {
                return Err(config_error("test.field", "dimension mismatch"));
            }
            TestSpec::ThetaConvexity { problem } => {
                problem.validate().map_err(|e| config_error("test.problem", e))?;
            }
            _ => {}
        }
        if let TestSpec::FirstVariation { .. } | TestSpec::Equilibrium { .. } = &self.test {
            if let Some(w) = &self.energy {
                let c = Catalog::new(w.clone()).map_err(|e| config_error("energy", e))?;
                if !c.arity().homogeneous() {
                    return Err(config_error("energy", "must depend on the gradient only"));
                }
            }
        }
        Ok(())
    }
}

fn subject_dim(s: &Subject) -> usize {
    match s {
        Subject::Map { map } => map.dim(),
        Subject::Jet { f } => f.dim(),
    }
}

/// Dimension fixed by the field kind; `None` for shears, which fit any
/// dimension above their indices.
fn field_dim(f: &FieldSpec) -> Option<usize> {
    match f {
        FieldSpec::GenericBump { bumps } => bumps.first().map(|b| b.center.len()),
        FieldSpec::DivFree2D { .. } | FieldSpec::Hamiltonian2D { .. } => Some(2),
        FieldSpec::DivFree3D { .. } => Some(3),
        FieldSpec::Separable1D { .. } => Some(1),
        FieldSpec::Shear { .. } => None,
    }
}

/// Reads [`SEED_ENV`]; unset or empty means no override.
pub fn seed_override() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{SEED_ENV}: '{v}' is not an unsigned integer"))),
        _ => Ok(None),
    }
}

/// One suite entry with the verdict it is expected to produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub expect: Verdict,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteFile {
    pub entries: Vec<SuiteEntry>,
}

/// Parses JSON, reporting the key path of the first schema violation.
pub fn parse_json<T: DeserializeOwned>(text: &str, origin: &Path) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config(format!("{}: at '{path}': {}", origin.display(), e.inner()))
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_json(&text, path)
}
