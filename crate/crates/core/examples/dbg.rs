use c0ife::scenarios::*;
use c0ife::space::Beta;

fn main() {
    let flower = flower_scenario(Beta::new(50.0, 1.0));
    for (n, su) in [(240usize, 20.0f64), (320, 20.0), (320, 2.0), (320, 100.0)] {
        let ov = Overrides { sigma_u: Some(su), ..Default::default() };
        let (space, u, _) = solve_scenario(&flower, 2, n, ov).unwrap();
        // compliance = integral of u (f = 1)
        let mid = u[space.dofs.vertex_dof(space.mesh.vertex_id(n / 2, n / 2))];
        println!("N={n} sigma_u={su}: |u|_inf = {:.4e}, u(0,0) = {:.4e}", u.amax(), mid);
    }
}
