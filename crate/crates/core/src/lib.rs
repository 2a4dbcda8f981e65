//! Internal-model toolkit: symbolic Lie calculus, linear internal-model
//! extraction, exosystems, simulation and normal-form construction for
//! input-affine systems `x' = f(x) + u g(x), y = h(x)`.

pub mod expr;
pub mod grade;
pub mod linpoly;
pub mod vfield;
pub mod exo;
pub mod sim;
pub mod nform;
