//! Matrix exponential: Pade approximation with scaling and squaring.
//!
//! Standard degree-13 scheme with the lower-degree (3/5/7/9) shortcuts for
//! small norms; evaluation order and theta thresholds follow the usual
//! double-precision table.

use nalgebra::DMatrix;

const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539398330063230e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068e0;
const THETA13: f64 = 5.371920351148152e0;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Max column absolute sum.
fn norm1(a: &DMatrix<f64>) -> f64 {
    let mut best = 0.0f64;
    for j in 0..a.ncols() {
        let s: f64 = a.column(j).iter().map(|v| v.abs()).sum();
        if s > best {
            best = s;
        }
    }
    best
}

/// Evaluate the degree-m Pade approximant (m in {3,5,7,9}) given powers of A.
fn pade_low(a: &DMatrix<f64>, powers: &[DMatrix<f64>], b: &[f64]) -> DMatrix<f64> {
    let n = a.nrows();
    let id = DMatrix::identity(n, n);
    // powers[k] = A^{2(k+1)}
    let mut u_inner = &id * b[1];
    let mut v = &id * b[0];
    for (k, p) in powers.iter().enumerate() {
        u_inner += p * b[2 * k + 3];
        v += p * b[2 * k + 2];
    }
    let u = a * u_inner;
    solve_pade(u, v)
}

/// (V - U) X = (V + U)
fn solve_pade(u: DMatrix<f64>, v: DMatrix<f64>) -> DMatrix<f64> {
    let lhs = &v - &u;
    let rhs = &v + &u;
    lhs.lu()
        .solve(&rhs)
        .expect("Pade denominator must be invertible for admissible scaling")
}

/// exp(A) for a real square matrix. Total: never fails for finite input.
pub fn matrix_exponential(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), a.ncols(), "matrix_exponential requires square input");
    let n = a.nrows();
    let nrm = norm1(a);

    let a2 = a * a;
    if nrm <= THETA3 {
        return pade_low(a, &[a2], &B3);
    }
    let a4 = &a2 * &a2;
    if nrm <= THETA5 {
        return pade_low(a, &[a2, a4], &B5);
    }
    let a6 = &a2 * &a4;
    if nrm <= THETA7 {
        return pade_low(a, &[a2, a4, a6], &B7);
    }
    if nrm <= THETA9 {
        let a8 = &a2 * &a6;
        return pade_low(a, &[a2, a4, a6, a8], &B9);
    }

    // Scale down to norm <= theta13, degree-13 Pade, then square back up.
    let s = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil().max(0.0) as u32
    } else {
        0
    };
    let scale = 0.5f64.powi(s as i32);
    let a_s = a * scale;
    let a2 = &a_s * &a_s;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let id = DMatrix::identity(n, n);

    let u_high = &a6 * (&a6 * B13[13] + &a4 * B13[11] + &a2 * B13[9]);
    let u_low = &a6 * B13[7] + &a4 * B13[5] + &a2 * B13[3] + &id * B13[1];
    let u = &a_s * (u_high + u_low);
    let v_high = &a6 * (&a6 * B13[12] + &a4 * B13[10] + &a2 * B13[8]);
    let v = v_high + &a6 * B13[6] + &a4 * B13[4] + &a2 * B13[2] + &id * B13[0];

    let mut r = solve_pade(u, v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}
