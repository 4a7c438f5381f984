use serde::{Deserialize, Serialize};

use super::graph::{for_each_assignment, DiscreteFactorGraph, DiscreteSetDensity};
use crate::error::{Error, Result};

/// Message update order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schedule {
    /// All variable-to-factor messages, then all factor-to-variable messages.
    Flooding,
    /// Leaves-to-root then root-to-leaves on each tree of a forest.
    TreeSweep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BpOutcome {
    pub beliefs: Vec<DiscreteSetDensity>,
    pub iterations: usize,
    /// Largest change of any message during the final iteration.
    pub last_change: f64,
}

#[derive(Clone, Copy)]
enum Node {
    Var(usize),
    Factor(usize),
}

struct Messages<'g> {
    graph: &'g DiscreteFactorGraph,
    neighbors: Vec<Vec<usize>>,
    /// `to_var[a][k]`: factor `a` to its `k`-th variable.
    to_var: Vec<Vec<Vec<f64>>>,
    /// `to_factor[a][k]`: the `k`-th variable of factor `a` to `a`.
    to_factor: Vec<Vec<Vec<f64>>>,
}

fn normalize(values: &mut [f64]) {
    let total: f64 = values.iter().sum();
    if total > 0.0 && total.is_finite() {
        values.iter_mut().for_each(|v| *v /= total);
    }
}

fn max_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter().zip(new).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

impl<'g> Messages<'g> {
    fn new(graph: &'g DiscreteFactorGraph) -> Self {
        let uniform = |v: usize| {
            let n = graph.domains[v].len();
            vec![1.0 / n as f64; n]
        };
        let to_var = graph
            .factors
            .iter()
            .map(|f| f.vars.iter().map(|&v| uniform(v)).collect())
            .collect::<Vec<Vec<Vec<f64>>>>();
        Self {
            graph,
            neighbors: graph.neighbors(),
            to_factor: to_var.clone(),
            to_var,
        }
    }

    fn position(&self, factor: usize, var: usize) -> usize {
        self.graph.factors[factor]
            .vars
            .iter()
            .position(|&v| v == var)
            .expect("variable adjacent to factor")
    }

    /// Product of all factor messages into `var` except the one from `skip`.
    fn incoming_product(&self, var: usize, skip: Option<usize>) -> Vec<f64> {
        let mut out = vec![1.0; self.graph.domains[var].len()];
        for &b in &self.neighbors[var] {
            if Some(b) == skip {
                continue;
            }
            let msg = &self.to_var[b][self.position(b, var)];
            out.iter_mut().zip(msg).for_each(|(o, m)| *o *= m);
        }
        out
    }

    fn send_to_factor(&mut self, var: usize, factor: usize) -> f64 {
        let mut msg = self.incoming_product(var, Some(factor));
        normalize(&mut msg);
        let k = self.position(factor, var);
        let change = max_change(&self.to_factor[factor][k], &msg);
        self.to_factor[factor][k] = msg;
        change
    }

    fn send_to_var(&mut self, factor: usize, var: usize) -> f64 {
        let f = &self.graph.factors[factor];
        let k = self.position(factor, var);
        let sizes: Vec<usize> = f.vars.iter().map(|&v| self.graph.domains[v].len()).collect();
        let mut msg = vec![0.0; sizes[k]];
        let incoming = &self.to_factor[factor];
        for_each_assignment(&sizes, |flat, idx| {
            let mut w = f.table[flat];
            for (pos, &i) in idx.iter().enumerate() {
                if pos != k && w != 0.0 {
                    w *= incoming[pos][i];
                }
            }
            msg[idx[k]] += w;
        });
        normalize(&mut msg);
        let change = max_change(&self.to_var[factor][k], &msg);
        self.to_var[factor][k] = msg;
        change
    }

    fn send(&mut self, from: Node, to: Node) -> f64 {
        match (from, to) {
            (Node::Var(v), Node::Factor(a)) => self.send_to_factor(v, a),
            (Node::Factor(a), Node::Var(v)) => self.send_to_var(a, v),
            _ => unreachable!("bipartite graph"),
        }
    }

    fn flood(&mut self) -> f64 {
        let mut change: f64 = 0.0;
        for (a, f) in self.graph.factors.iter().enumerate() {
            for &v in &f.vars {
                change = change.max(self.send_to_factor(v, a));
            }
        }
        for (a, f) in self.graph.factors.iter().enumerate() {
            for &v in &f.vars {
                change = change.max(self.send_to_var(a, v));
            }
        }
        change
    }

    /// `(node, parent)` pairs in depth-first pre-order over every tree.
    fn tree_order(&self) -> Vec<(Node, Node)> {
        let graph = self.graph;
        let mut seen_var = vec![false; graph.domains.len()];
        let mut seen_factor = vec![false; graph.factors.len()];
        let mut order = Vec::new();
        for root in 0..graph.domains.len() {
            if seen_var[root] {
                continue;
            }
            seen_var[root] = true;
            let mut stack = vec![Node::Var(root)];
            while let Some(node) = stack.pop() {
                match node {
                    Node::Var(v) => {
                        for &a in &self.neighbors[v] {
                            if !seen_factor[a] {
                                seen_factor[a] = true;
                                order.push((Node::Factor(a), node));
                                stack.push(Node::Factor(a));
                            }
                        }
                    }
                    Node::Factor(a) => {
                        for &v in &graph.factors[a].vars {
                            if !seen_var[v] {
                                seen_var[v] = true;
                                order.push((Node::Var(v), node));
                                stack.push(Node::Var(v));
                            }
                        }
                    }
                }
            }
        }
        order
    }

    fn sweep(&mut self, order: &[(Node, Node)]) -> f64 {
        let mut change: f64 = 0.0;
        for &(node, parent) in order.iter().rev() {
            change = change.max(self.send(node, parent));
        }
        for &(node, parent) in order {
            change = change.max(self.send(parent, node));
        }
        change
    }

    fn beliefs(&self) -> Vec<DiscreteSetDensity> {
        (0..self.graph.domains.len())
            .map(|v| {
                let mut values = self.incoming_product(v, None);
                normalize(&mut values);
                DiscreteSetDensity {
                    domain: self.graph.domains[v].clone(),
                    values,
                }
            })
            .collect()
    }
}

/// Run set-type BP for `iterations` rounds and return normalized beliefs.
///
/// Factor-to-variable messages sum the factor against the incoming
/// variable messages over all subsets of the other variables; a
/// variable-to-factor message is the product of the other incoming factor
/// messages. Messages are normalized after each update.
pub fn run_set_bp(
    graph: &DiscreteFactorGraph,
    schedule: Schedule,
    iterations: usize,
) -> Result<BpOutcome> {
    let mut messages = Messages::new(graph);
    let order = match schedule {
        Schedule::TreeSweep if !graph.is_forest() => {
            return Err(Error::Argument("tree sweep needs a cycle-free graph".into()))
        }
        Schedule::TreeSweep => messages.tree_order(),
        Schedule::Flooding => Vec::new(),
    };
    let mut last_change = 0.0;
    for _ in 0..iterations {
        last_change = match schedule {
            Schedule::Flooding => messages.flood(),
            Schedule::TreeSweep => messages.sweep(&order),
        };
    }
    Ok(BpOutcome {
        beliefs: messages.beliefs(),
        iterations,
        last_change,
    })
}
