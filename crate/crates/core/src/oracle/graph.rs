use serde::{Deserialize, Serialize};

use super::ENUMERATION_LIMIT;
use crate::error::{Error, Result};

/// All subsets of a finite space up to a cardinality cap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetDomain {
    space_size: usize,
    cap: usize,
    subsets: Vec<u32>,
    index_of: Vec<Option<usize>>,
}

impl SetDomain {
    pub fn new(space_size: usize, cap: usize) -> Result<Self> {
        if space_size > 16 {
            return Err(Error::Argument(format!("space of size {space_size} is too large")));
        }
        let mut subsets: Vec<u32> = (0..1u32 << space_size)
            .filter(|mask| mask.count_ones() as usize <= cap)
            .collect();
        subsets.sort_by_key(|mask| (mask.count_ones(), *mask));
        let mut index_of = vec![None; 1 << space_size];
        for (i, &mask) in subsets.iter().enumerate() {
            index_of[mask as usize] = Some(i);
        }
        Ok(Self {
            space_size,
            cap: cap.min(space_size),
            subsets,
            index_of,
        })
    }

    pub fn space_size(&self) -> usize {
        self.space_size
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// Number of admissible subsets.
    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }

    pub fn subset(&self, index: usize) -> u32 {
        self.subsets[index]
    }

    pub fn subsets(&self) -> &[u32] {
        &self.subsets
    }

    pub fn index(&self, mask: u32) -> Option<usize> {
        self.index_of.get(mask as usize).copied().flatten()
    }
}

/// Non-negative function on the subsets of a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSetDensity {
    pub domain: SetDomain,
    pub values: Vec<f64>,
}

impl DiscreteSetDensity {
    pub fn from_fn(domain: SetDomain, f: impl Fn(u32) -> f64) -> Self {
        let values = domain.subsets().iter().map(|&m| f(m)).collect();
        Self { domain, values }
    }

    /// Poisson-type function `∏_{x∈X} λ(x)`, normalized over the domain.
    pub fn poisson(domain: SetDomain, intensity: &[f64]) -> Self {
        let density = Self::from_fn(domain, |mask| {
            (0..intensity.len())
                .filter(|x| mask & (1 << x) != 0)
                .map(|x| intensity[x])
                .product()
        });
        density.normalized()
    }

    /// Set integral: the sum over all admissible subsets.
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn normalized(&self) -> Self {
        let total = self.total();
        let values = if total > 0.0 {
            self.values.iter().map(|v| v / total).collect()
        } else {
            self.values.clone()
        };
        Self {
            domain: self.domain.clone(),
            values,
        }
    }

    pub fn value(&self, mask: u32) -> f64 {
        self.domain.index(mask).map_or(0.0, |i| self.values[i])
    }

    /// Largest absolute difference to another density on the same domain.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Factor over the set variables `vars`, tabulated in row-major order of
/// their subset indices (last variable fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteFactor {
    pub vars: Vec<usize>,
    pub table: Vec<f64>,
}

/// Factor graph over set-valued variables.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DiscreteFactorGraph {
    pub domains: Vec<SetDomain>,
    pub factors: Vec<DiscreteFactor>,
}

/// Mixed-radix counter over the subset indices of several domains.
pub(crate) fn for_each_assignment(sizes: &[usize], mut visit: impl FnMut(usize, &[usize])) {
    let mut idx = vec![0usize; sizes.len()];
    let total: usize = sizes.iter().product();
    for flat in 0..total {
        visit(flat, &idx);
        for pos in (0..sizes.len()).rev() {
            idx[pos] += 1;
            if idx[pos] < sizes[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }
}

impl DiscreteFactorGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add a variable and return its index.
    pub fn add_variable(&mut self, domain: SetDomain) -> usize {
        self.domains.push(domain);
        self.domains.len() - 1
    }

    /// Add a factor built by evaluating `f` on every joint subset assignment.
    pub fn add_factor(&mut self, vars: &[usize], f: impl Fn(&[u32]) -> f64) -> Result<usize> {
        for (pos, &v) in vars.iter().enumerate() {
            if v >= self.domains.len() {
                return Err(Error::Argument(format!("factor references unknown variable {v}")));
            }
            if vars[..pos].contains(&v) {
                return Err(Error::Argument(format!("variable {v} repeated in factor")));
            }
        }
        let sizes: Vec<usize> = vars.iter().map(|&v| self.domains[v].len()).collect();
        let mut table = vec![0.0; sizes.iter().product()];
        let mut masks = vec![0u32; vars.len()];
        for_each_assignment(&sizes, |flat, idx| {
            for (k, &v) in vars.iter().enumerate() {
                masks[k] = self.domains[v].subset(idx[k]);
            }
            table[flat] = f(&masks);
        });
        if table.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Input("factor values must be finite and non-negative".into()));
        }
        self.factors.push(DiscreteFactor {
            vars: vars.to_vec(),
            table,
        });
        Ok(self.factors.len() - 1)
    }

    /// Unary factor equal to a given set density.
    pub fn add_density(&mut self, var: usize, density: &DiscreteSetDensity) -> Result<usize> {
        if self.domains.get(var) != Some(&density.domain) {
            return Err(Error::Argument(format!("density domain does not match variable {var}")));
        }
        self.add_factor(&[var], |m| density.value(m[0]))
    }

    /// Factor `δ(whole = ⊎ parts)`: one when the parts are pairwise disjoint
    /// and their union is `whole`.
    pub fn add_disjoint_union(&mut self, whole: usize, parts: &[usize]) -> Result<usize> {
        let mut vars = vec![whole];
        vars.extend_from_slice(parts);
        self.add_factor(&vars, |m| {
            let mut union = 0u32;
            for &part in &m[1..] {
                if union & part != 0 {
                    return 0.0;
                }
                union |= part;
            }
            if union == m[0] {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Factors adjacent to each variable.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.domains.len()];
        for (a, f) in self.factors.iter().enumerate() {
            for &v in &f.vars {
                out[v].push(a);
            }
        }
        out
    }

    /// True when the bipartite variable/factor graph has no cycle.
    pub fn is_forest(&self) -> bool {
        let nodes = self.domains.len() + self.factors.len();
        let edges: usize = self.factors.iter().map(|f| f.vars.len()).sum();
        let mut parent: Vec<usize> = (0..nodes).collect();
        fn find(parent: &mut [usize], x: usize) -> usize {
            let mut root = x;
            while parent[root] != root {
                root = parent[root];
            }
            parent[x] = root;
            root
        }
        let mut components = nodes;
        for (a, f) in self.factors.iter().enumerate() {
            for &v in &f.vars {
                let ra = find(&mut parent, self.domains.len() + a);
                let rv = find(&mut parent, v);
                if ra == rv {
                    return false;
                }
                parent[ra] = rv;
                components -= 1;
            }
        }
        edges + components == nodes
    }
}

/// Exact normalized marginals of every variable by full enumeration.
pub fn exact_marginals(g: &DiscreteFactorGraph) -> Result<Vec<DiscreteSetDensity>> {
    let sizes: Vec<usize> = g.domains.iter().map(SetDomain::len).collect();
    let size: u128 = sizes.iter().map(|&s| s as u128).product();
    if size > ENUMERATION_LIMIT {
        return Err(Error::Capacity {
            size,
            limit: ENUMERATION_LIMIT,
        });
    }
    let strides: Vec<Vec<usize>> = g
        .factors
        .iter()
        .map(|f| {
            let mut strides = vec![1usize; f.vars.len()];
            for k in (0..f.vars.len().saturating_sub(1)).rev() {
                strides[k] = strides[k + 1] * sizes[f.vars[k + 1]];
            }
            strides
        })
        .collect();
    let mut marginals: Vec<Vec<f64>> = sizes.iter().map(|&s| vec![0.0; s]).collect();
    for_each_assignment(&sizes, |_, idx| {
        let mut weight = 1.0;
        for (f, stride) in g.factors.iter().zip(&strides) {
            let flat: usize = f.vars.iter().zip(stride).map(|(&v, s)| idx[v] * s).sum();
            weight *= f.table[flat];
            if weight == 0.0 {
                return;
            }
        }
        for (v, &i) in idx.iter().enumerate() {
            marginals[v][i] += weight;
        }
    });
    Ok(g.domains
        .iter()
        .zip(marginals)
        .map(|(domain, values)| {
            DiscreteSetDensity {
                domain: domain.clone(),
                values,
            }
            .normalized()
        })
        .collect())
}
