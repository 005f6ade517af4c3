use linfb_core::background::{BackgroundFlow, Frame};
use linfb_core::elliptic::DirichletSolver;
use linfb_core::eos::EquationOfState;
use linfb_core::grid::Grid;
use linfb_core::wave::reconstruct_w1;

fn main() {
    let eos = EquationOfState::new(1.0, 2.0, 1.0).unwrap();
    for (nr, nt) in [(32usize, 64usize), (64, 128)] {
        let grid = Grid::new(nr, nt);
        let frame = Frame::assemble(&grid, &BackgroundFlow::Static, &eos, 0.0).unwrap();
        let solver = DirichletSolver::new(&frame, &vec![1.0; grid.n()]).unwrap();
        let phi = grid.scalar_from(|_, _| 1.0);
        let w1 = reconstruct_w1(&frame, &solver, &phi);
        let mut per_ring = vec![0.0f64; grid.nr];
        for k in 0..grid.n() {
            let (x, y) = grid.node_xy(k);
            let e = (w1.x[k] - 0.5 * x).abs().max((w1.y[k] - 0.5 * y).abs());
            let i = grid.ring(k);
            per_ring[i] = per_ring[i].max(e);
        }
        println!("--- {nr}x{nt}");
        for (i, e) in per_ring.iter().enumerate() {
            println!("ring {i}: {e:.3e}");
        }
    }
}
