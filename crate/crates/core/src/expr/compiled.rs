use num_traits::ToPrimitive;

use super::{Expr, ExprError, Func, ParamValues};

#[derive(Debug, Clone)]
enum Node {
    Const(f64),
    Var(usize),
    Add(Vec<Node>),
    Mul(Vec<Node>),
    Pow(Box<Node>, i32),
    Call(Func, Box<Node>),
}

/// Expression with constants converted to `f64` and parameters resolved,
/// for repeated evaluation inside integrators.
#[derive(Debug, Clone)]
pub struct CompiledExpr {
    root: Node,
    source: String,
}

impl CompiledExpr {
    pub(crate) fn new(e: &Expr, params: &ParamValues) -> Result<Self, ExprError> {
        Ok(CompiledExpr {
            root: lower(e, params)?,
            source: e.to_string(),
        })
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        let v = eval_node(&self.root, x).map_err(|reason| ExprError::Domain {
            subexpr: self.source.clone(),
            reason,
        })?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::Domain {
                subexpr: self.source.clone(),
                reason: "non-finite value".into(),
            })
        }
    }
}

fn lower(e: &Expr, params: &ParamValues) -> Result<Node, ExprError> {
    Ok(match e {
        Expr::Const(c) => Node::Const(c.to_f64().unwrap_or(f64::NAN)),
        Expr::Var(i) => Node::Var(*i),
        Expr::Param(p) => Node::Const(
            *params
                .get(p)
                .ok_or_else(|| ExprError::UnboundParameter(p.clone()))?,
        ),
        Expr::Add(ts) => Node::Add(ts.iter().map(|t| lower(t, params)).collect::<Result<_, _>>()?),
        Expr::Mul(fs) => Node::Mul(fs.iter().map(|t| lower(t, params)).collect::<Result<_, _>>()?),
        Expr::Pow(b, k) => Node::Pow(Box::new(lower(b, params)?), *k as i32),
        Expr::Call(f, a) => Node::Call(*f, Box::new(lower(a, params)?)),
    })
}

fn eval_node(n: &Node, x: &[f64]) -> Result<f64, String> {
    Ok(match n {
        Node::Const(c) => *c,
        Node::Var(i) => *x
            .get(*i)
            .ok_or_else(|| format!("state has only {} coordinates", x.len()))?,
        Node::Add(ts) => {
            let mut s = 0.0;
            for t in ts {
                s += eval_node(t, x)?;
            }
            s
        }
        Node::Mul(fs) => {
            let mut s = 1.0;
            for f in fs {
                s *= eval_node(f, x)?;
            }
            s
        }
        Node::Pow(b, k) => {
            let v = eval_node(b, x)?;
            if v == 0.0 && *k < 0 {
                return Err("division by zero".into());
            }
            v.powi(*k)
        }
        Node::Call(f, a) => f.apply(eval_node(a, x)?)?,
    })
}
