//! PSD construction, square roots and the Loewner order.
//!
//! ```text
//! cargo run --example psd_operators
//! ```

use wpc::linalg::{loewner_leq, make_psd, sym_eigen, SymMatrix, DEFAULT_PSD_TOL};
use wpc::sampling::random_gram;

fn main() -> wpc::Result<()> {
    let m = SymMatrix::from_row_major(3, &[4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0])?;
    let spectrum = sym_eigen(&m)?;
    println!("eigenvalues {:?}", spectrum.eigenvalues);

    let r = make_psd(&m, DEFAULT_PSD_TOL)?;
    let root = r.sqrt();
    let back = root.matrix() * root.matrix();
    println!("||sqrt(R)^2 - R||_max = {:.2e}", wpc::linalg::SymMatrix::new(back)?.max_abs_diff(r.base()));
    println!("trace {:.6}  hs {:.6}", r.trace(), r.hs_norm());

    // a tiny negative eigenvalue is clamped, a large one is rejected
    let nearly = SymMatrix::from_diagonal(&[1.0, -1e-14])?;
    println!("clamped: {}", make_psd(&nearly, DEFAULT_PSD_TOL)?.clamp_applied());
    let bad = SymMatrix::from_diagonal(&[1.0, -0.5])?;
    println!("rejected: {}", make_psd(&bad, DEFAULT_PSD_TOL).unwrap_err());

    let a = random_gram(6, 2, 1);
    let sum = make_psd(&a.base().add(random_gram(6, 3, 2).base())?, DEFAULT_PSD_TOL)?;
    println!("A <= A + B: {}", loewner_leq(&a, &sum, 1e-10)?);
    println!("A + B <= A: {}", loewner_leq(&sum, &a, 1e-10)?);
    Ok(())
}
