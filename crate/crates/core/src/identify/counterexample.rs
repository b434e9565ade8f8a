use crate::ode::Expr;

/// `u_bar = u* + (beta* - beta_bar) g`, so that `beta_bar g + u_bar`
/// equals `beta* g + u*` everywhere: the constant is not identifiable from
/// the growth and drug terms alone without a second, C-separated sample.
pub fn counterexample_shift(beta_true: f64, beta_bar: f64, u_true: &Expr, g: &Expr) -> Expr {
    if beta_true == beta_bar {
        return u_true.clone();
    }
    u_true.clone() + Expr::constant(beta_true - beta_bar) * g.clone()
}
