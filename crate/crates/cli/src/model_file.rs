//! Declarative model files.
//!
//! ```json
//! { "factors": 1, "factor1": "gumbel", "tree": [[1, 2], [2, 3]], "tree_family": "bvn" }
//! ```
//!
//! Family fields take one name for every item (or edge) or a list. `tree` is
//! an explicit list of 1-based item pairs, `"polychoric"`, `"partial"`, or
//! `true` (selection only); absent or `false` means no tree.

use fctree::select::{select_tree, TreeVariant};
use fctree::{CopulaFamily, CutpointSet, EdgeSet, ModelSpec, QuadratureRule, ResponseMatrix};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Families {
    All(CopulaFamily),
    Each(Vec<CopulaFamily>),
}

impl Families {
    fn expand(&self, len: usize, what: &str) -> Result<Vec<CopulaFamily>, CliError> {
        match self {
            Families::All(f) => Ok(vec![*f; len]),
            Families::Each(v) if v.len() == len => Ok(v.clone()),
            Families::Each(v) => Err(CliError::Input(format!(
                "{what}: expected {len} families, got {}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum TreeField {
    Flag(bool),
    Method(String),
    Edges(Vec<[usize; 2]>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TreeMethod {
    Explicit,
    Polychoric,
    Partial,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub factors: usize,
    pub factor1: Option<Families>,
    pub factor2: Option<Families>,
    pub tree: Option<TreeField>,
    pub tree_family: Option<Families>,
    /// 1-based item whose second-factor link is fixed to independence.
    pub identified_item: Option<usize>,
    /// Candidate families for selection.
    pub factor_candidates: Option<Vec<CopulaFamily>>,
    pub tree_candidates: Option<Vec<CopulaFamily>>,
}

impl ModelFile {
    pub fn read(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    pub fn has_tree(&self) -> bool {
        !matches!(self.tree, None | Some(TreeField::Flag(false)))
    }

    /// How the tree is to be obtained, letting `flag` override the file.
    pub fn tree_method(&self, flag: Option<TreeMethod>) -> Result<Option<TreeMethod>, CliError> {
        if let Some(m) = flag {
            return Ok(Some(m));
        }
        match &self.tree {
            None | Some(TreeField::Flag(false)) => Ok(None),
            Some(TreeField::Edges(_)) => Ok(Some(TreeMethod::Explicit)),
            Some(TreeField::Method(m)) => match m.as_str() {
                "polychoric" => Ok(Some(TreeMethod::Polychoric)),
                "partial" => Ok(Some(TreeMethod::Partial)),
                "explicit" => Ok(Some(TreeMethod::Explicit)),
                other => Err(CliError::Input(format!("unknown tree method '{other}'"))),
            },
            Some(TreeField::Flag(true)) => Err(CliError::Input(
                "'tree: true' needs --tree to say how to build it".into(),
            )),
        }
    }

    fn explicit_edges(&self, d: usize) -> Result<EdgeSet, CliError> {
        let Some(TreeField::Edges(pairs)) = &self.tree else {
            return Err(CliError::Input(
                "--tree explicit needs an edge list in the model file".into(),
            ));
        };
        let mut edges = Vec::with_capacity(pairs.len());
        for &[a, b] in pairs {
            if a == 0 || b == 0 {
                return Err(CliError::Input("tree edges are 1-based".into()));
            }
            edges.push((a - 1, b - 1));
        }
        EdgeSet::new(d, edges).map_err(|e| CliError::Input(e.to_string()))
    }

    /// The model for `data`, building the tree from the data when asked.
    pub fn build(
        &self,
        data: &ResponseMatrix,
        cut: &CutpointSet,
        flag: Option<TreeMethod>,
        rule: &QuadratureRule,
    ) -> Result<ModelSpec, CliError> {
        let d = data.d();
        if self.factors > 2 {
            return Err(CliError::Input(format!(
                "factors must be 0, 1 or 2, got {}",
                self.factors
            )));
        }
        let fam = |f: &Option<Families>, len: usize, what: &str| match f {
            Some(f) => f.expand(len, what),
            None => Ok(vec![CopulaFamily::Bvn; len]),
        };
        let f1 = if self.factors >= 1 {
            fam(&self.factor1, d, "factor1")?
        } else {
            vec![]
        };
        let f2 = if self.factors == 2 {
            fam(&self.factor2, d, "factor2")?
        } else {
            vec![]
        };
        let tree = match self.tree_method(flag)? {
            None => None,
            Some(TreeMethod::Explicit) => Some(self.explicit_edges(d)?),
            Some(TreeMethod::Polychoric) => {
                Some(select_tree(data, cut, TreeVariant::Polychoric, rule)?)
            }
            Some(TreeMethod::Partial) => {
                let v = TreeVariant::partial(self.factors).unwrap_or(TreeVariant::Polychoric);
                Some(select_tree(data, cut, v, rule)?)
            }
        };
        let tree = match tree {
            Some(t) => Some((t, fam(&self.tree_family, d - 1, "tree_family")?)),
            None => None,
        };
        let mut spec = ModelSpec::new(d, self.factors, f1, f2, tree)
            .map_err(|e| CliError::Input(e.to_string()))?;
        if let Some(item) = self.identified_item {
            if item == 0 || item > d {
                return Err(CliError::Input(format!(
                    "identified_item {item} out of range 1..={d}"
                )));
            }
            spec = spec
                .with_identification(item - 1)
                .map_err(|e| CliError::Input(e.to_string()))?;
        }
        Ok(spec)
    }
}

/// The model in file form, with 1-based edges.
pub fn describe(spec: &ModelSpec) -> ModelFile {
    let tree = spec
        .tree
        .as_ref()
        .map(|t| TreeField::Edges(t.edges().iter().map(|&(a, b)| [a + 1, b + 1]).collect()));
    let each = |v: &[CopulaFamily]| {
        if v.is_empty() {
            None
        } else {
            Some(Families::Each(v.to_vec()))
        }
    };
    ModelFile {
        factors: spec.factors,
        factor1: each(&spec.factor1),
        factor2: each(&spec.factor2),
        tree,
        tree_family: each(&spec.tree_families),
        identified_item: spec.identified_item.map(|j| j + 1),
        factor_candidates: None,
        tree_candidates: None,
    }
}
