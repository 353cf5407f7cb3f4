use lbtrace_core::levelset::*;
use lbtrace_core::mesh::*;
use lbtrace_core::quadrature::*;

fn main() {
    let sphere = LevelSetSurface::sphere();
    let mesh = build_uniform_mesh(16, BoundingBox::cube(2.0));
    for e in [10312usize, 9863] {
        println!("elem {e}: verts {:?}", mesh.tet_vertices(e));
        let frame = choose_frame(&mesh, e, &sphere).unwrap();
        println!("  nu={:?} nw={:?} ext={:?}", frame.axes[0], frame.axes[2], frame.extents);
        for p in debug_t_pieces(&mesh, e, &sphere, 6) {
            println!("  piece [{:.6}, {:.6}] grade_lo={} grade_hi={}", p.0, p.1, p.2, p.3);
        }
    }
}
