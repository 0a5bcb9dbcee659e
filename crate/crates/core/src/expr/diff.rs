use std::collections::{HashMap, HashSet};

use super::{Expr, Node};

/// Partial derivative ∂e/∂var by the structural rules.
pub fn differentiate(e: &Expr, var: &str) -> Expr {
    let mut memo = HashMap::new();
    forward(e, var, &mut memo)
}

fn forward(e: &Expr, var: &str, memo: &mut HashMap<usize, Expr>) -> Expr {
    if let Some(d) = memo.get(&e.id()) {
        return d.clone();
    }
    let d = match e.node() {
        Node::Const(_) => Expr::zero(),
        Node::Var(name) => {
            if &**name == var {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Add(terms) => Expr::sum(terms.iter().map(|t| forward(t, var, memo))),
        Node::Mul(factors) => {
            let mut terms = Vec::new();
            for (k, f) in factors.iter().enumerate() {
                let df = forward(f, var, memo);
                if df.is_zero() {
                    continue;
                }
                let mut prod: Vec<Expr> = Vec::with_capacity(factors.len());
                for (j, g) in factors.iter().enumerate() {
                    prod.push(if j == k { df.clone() } else { g.clone() });
                }
                terms.push(Expr::product(prod));
            }
            Expr::sum(terms)
        }
        Node::Neg(x) => forward(x, var, memo).neg(),
        Node::Div(n, den) => {
            let dn = forward(n, var, memo);
            let dd = forward(den, var, memo);
            let first = dn.div(den);
            if dd.is_zero() {
                first
            } else {
                // (n/d)' = n'/d − (n/d)·d'/d
                first.sub(&Expr::product([e.clone(), dd]).div(den))
            }
        }
        Node::Pow(b, k) => {
            let db = forward(b, var, memo);
            if db.is_zero() {
                Expr::zero()
            } else {
                Expr::product([Expr::int(i64::from(*k)), b.pow(i64::from(*k) - 1), db])
            }
        }
    };
    memo.insert(e.id(), d.clone());
    d
}

/// Gradient of `e` with respect to `vars`, computed in one reverse sweep
/// over the DAG. Entry order follows `vars`.
pub fn gradient(e: &Expr, vars: &[String]) -> Vec<Expr> {
    let order = topo_order(e);
    let mut contributions: HashMap<usize, Vec<Expr>> = HashMap::new();
    contributions.insert(e.id(), vec![Expr::one()]);
    let mut by_name: HashMap<&str, Vec<Expr>> = HashMap::new();

    for node in order.iter().rev() {
        let Some(parts) = contributions.remove(&node.id()) else {
            continue;
        };
        let adj = Expr::sum(parts);
        if adj.is_zero() {
            continue;
        }
        let mut push = |child: &Expr, value: Expr| {
            if !value.is_zero() {
                contributions.entry(child.id()).or_default().push(value);
            }
        };
        match node.node() {
            Node::Const(_) => {}
            Node::Var(name) => by_name.entry(name).or_default().push(adj),
            Node::Add(terms) => {
                for t in terms {
                    push(t, adj.clone());
                }
            }
            Node::Neg(x) => push(x, adj.neg()),
            Node::Mul(factors) => {
                let n = factors.len();
                // prefix[k] = f0·…·f(k−1), suffix[k] = f(k+1)·…·f(n−1)
                let mut prefix = Vec::with_capacity(n);
                let mut acc = adj.clone();
                for f in factors {
                    prefix.push(acc.clone());
                    acc = acc.mul(f);
                }
                let mut suffix = vec![Expr::one(); n];
                let mut acc = Expr::one();
                for k in (0..n).rev() {
                    suffix[k] = acc.clone();
                    acc = factors[k].mul(&acc);
                }
                for k in 0..n {
                    push(&factors[k], prefix[k].mul(&suffix[k]));
                }
            }
            Node::Div(num, den) => {
                push(num, adj.div(den));
                push(den, adj.mul(node).div(den).neg());
            }
            Node::Pow(b, k) => {
                let k = i64::from(*k);
                push(b, Expr::product([adj.clone(), Expr::int(k), b.pow(k - 1)]));
            }
        }
    }

    vars.iter()
        .map(|v| match by_name.remove(v.as_str()) {
            Some(parts) => Expr::sum(parts),
            None => Expr::zero(),
        })
        .collect()
}

/// Children-before-parents ordering of the DAG rooted at `e`.
fn topo_order(e: &Expr) -> Vec<Expr> {
    let mut order = Vec::new();
    let mut seen = HashSet::new();
    // Iterative post-order: (node, children pushed?)
    let mut stack = vec![(e.clone(), false)];
    while let Some((node, expanded)) = stack.pop() {
        if expanded {
            order.push(node);
            continue;
        }
        if !seen.insert(node.id()) {
            continue;
        }
        stack.push((node.clone(), true));
        for c in node.children() {
            if !seen.contains(&c.id()) {
                stack.push((c.clone(), false));
            }
        }
    }
    order
}

/// One Lie-derivative step ∇e·f, given the precomputed gradient of `e`.
pub fn lie_derivative_along(grad: &[Expr], field: &[Expr]) -> Expr {
    Expr::dot(grad, field)
}
