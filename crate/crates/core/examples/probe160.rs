use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use flexigrid::*;

fn main() {
    let sc = Scenario::from_load(160, 4, 32.0).unwrap();
    let red = enumerate_reduced(&sc).unwrap();
    let gen = build_reduced_approx(&sc, ReducedPolicy::Ra, &red);
    let n = gen.dim();
    let last = n - 1;
    let mut triplets: Vec<Triplet<usize, usize, f64>> = Vec::new();
    for x in 0..n {
        triplets.push(Triplet::new(last, x, 1.0));
        if x != last {
            triplets.push(Triplet::new(x, x, gen.diagonal(x)));
        }
        for &(col, rate) in gen.row(x) {
            if col != last {
                triplets.push(Triplet::new(col, x, rate));
            }
        }
    }
    let matrix = match SparseColMat::try_new_from_triplets(n, n, &triplets) {
        Ok(m) => { println!("matrix built"); m }
        Err(e) => { println!("triplet error: {e:?}"); return }
    };
    let rhs = faer::Mat::from_fn(n, 1, |r, _| if r == last { 1.0 } else { 0.0 });
    let lu = match matrix.sp_lu() {
        Ok(lu) => { println!("lu ok"); lu }
        Err(e) => { println!("lu error: {e:?}"); return }
    };
    let x = lu.solve(&rhs);
    let bad = (0..n).filter(|&k| !x[(k, 0)].is_finite()).count();
    let neg = (0..n).map(|k| x[(k, 0)]).fold(0.0f64, f64::min);
    let sum: f64 = (0..n).map(|k| x[(k, 0)]).sum();
    println!("nonfinite={bad} min={neg} sum={sum}");
}
