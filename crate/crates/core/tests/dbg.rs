use coag_core::{Grid, Profile};

#[test]
fn dbg_moment() {
    let grid = Grid::log_uniform(1e-4, 1e4, 161).unwrap();
    let p = Profile::power_law(grid, 1.0, 1.5).unwrap();
    let got = p.weighted_moment(0.5, 0.3, 300.0).unwrap();
    let exact = (300.0f64 / 0.3).ln();
    println!("got {got}, exact {exact}, rel {}", got / exact - 1.0);

    for &chi in &[-0.9, 0.0, 1.0, 1.9] {
        let s = chi - 1.5;
        let got = p.weighted_moment(chi, 0.3, 300.0).unwrap();
        let exact = (300.0f64.powf(s + 1.0) - 0.3f64.powf(s + 1.0)) / (s + 1.0);
        println!("chi={chi}: got {got} exact {exact} rel {}", got / exact - 1.0);
    }
}
