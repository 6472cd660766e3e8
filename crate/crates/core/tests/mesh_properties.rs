use erem::mesh::{build_interval_mesh, build_rect_mesh, prolong_nodal, refine_uniform, refine_uniform_with_parents, Mesh};
use proptest::prelude::*;

fn max_edge(mesh: &Mesh) -> f64 {
    let mut h: f64 = 0.0;
    for e in 0..mesh.n_elements() {
        let el = mesh.element(e);
        for i in 0..el.len() {
            for j in i + 1..el.len() {
                let (a, b) = (mesh.node(el[i]), mesh.node(el[j]));
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                h = h.max(d);
            }
        }
    }
    h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rectangle_refinement_invariants(
        nx in 1usize..6,
        ny in 1usize..6,
        x0 in -2.0f64..2.0,
        y0 in -2.0f64..2.0,
        w in 0.1f64..3.0,
        hgt in 0.1f64..3.0,
        levels in 0usize..3,
    ) {
        let mut mesh = build_rect_mesh(nx, ny, [x0, y0], [x0 + w, y0 + hgt]).unwrap();
        let area = w * hgt;
        for k in 0..=levels {
            prop_assert!((mesh.total_measure() - area).abs() <= 1e-12 * area);
            prop_assert_eq!(mesh.n_elements(), 2 * nx * ny * 4usize.pow(k as u32));
            prop_assert_eq!(mesh.n_facets(), 2 * (nx + ny) * 2usize.pow(k as u32));
            prop_assert!((mesh.h() - max_edge(&mesh)).abs() <= 1e-12 * mesh.h());
            prop_assert!(mesh.validate().is_ok());
            if k < levels {
                let fine = refine_uniform(&mesh);
                prop_assert!((fine.h() - mesh.h() / 2.0).abs() <= 1e-12 * mesh.h());
                mesh = fine;
            }
        }
    }

    #[test]
    fn interval_refinement_invariants(a in -5.0f64..5.0, len in 0.01f64..10.0, n in 1usize..50) {
        let mesh = build_interval_mesh(a, a + len, n).unwrap();
        let fine = refine_uniform(&mesh);
        prop_assert_eq!(fine.n_elements(), 2 * n);
        prop_assert_eq!(fine.n_facets(), 2);
        prop_assert!((fine.h() - mesh.h() / 2.0).abs() <= 1e-12 * len);
        prop_assert!((fine.total_measure() - len).abs() <= 1e-12 * len);
    }

    #[test]
    fn dump_roundtrip_is_exact(nx in 1usize..5, ny in 1usize..5, x0 in -1.0f64..1.0, refine in proptest::bool::ANY) {
        let mut mesh = build_rect_mesh(nx, ny, [x0, 0.3], [x0 + 1.7, 1.1]).unwrap();
        if refine {
            mesh = refine_uniform(&mesh);
        }
        let back = Mesh::from_dump_str(&mesh.to_dump_string()).unwrap();
        prop_assert_eq!(back, mesh);
    }

    #[test]
    fn prolongation_is_exact_for_affine_functions(nx in 1usize..5, ny in 1usize..5, a in -2.0f64..2.0, b in -2.0f64..2.0, c in -2.0f64..2.0) {
        let coarse = build_rect_mesh(nx, ny, [0.0, 0.0], [1.0, 1.0]).unwrap();
        let f = |x: &[f64]| a + b * x[0] + c * x[1];
        let values: Vec<f64> = (0..coarse.n_nodes()).map(|i| f(coarse.node(i))).collect();
        let (fine, parents) = refine_uniform_with_parents(&coarse);
        let lifted = prolong_nodal(&parents, &values);
        for (i, v) in lifted.iter().enumerate() {
            prop_assert!((v - f(fine.node(i))).abs() < 1e-12);
        }
    }
}

#[test]
fn mesh_examples() {
    let m = build_interval_mesh(0.0, 1.0, 4).unwrap();
    assert_eq!(m.n_nodes(), 5);
    assert_eq!(m.h(), 0.25);
    let m = build_interval_mesh(-1.0, 1.0, 8).unwrap();
    assert_eq!((m.n_elements(), m.h()), (8, 0.25));
    let m = build_rect_mesh(2, 2, [0.0, 0.0], [1.0, 1.0]).unwrap();
    assert!((0..8).all(|e| (m.element_measure(e) - 0.125).abs() < 1e-15));
    assert_eq!(refine_uniform(&m).n_elements(), 32);
    let m = build_rect_mesh(4, 4, [0.0, 0.0], [1.0, 1.0]).unwrap();
    assert!((m.h() - 2f64.sqrt() / 4.0).abs() < 1e-15);
}

#[test]
fn garbage_dumps_are_rejected_without_panicking() {
    for text in [
        "",
        "x",
        "2 3 1 0\n0 0\n1 0\n0 1\n0 1 2\n",
        "2 3 1 3\n0 0\n1 0\n0 1\n0 1 2\n0 1 0\n1 2 1\n2 0 3\n",
        "1 2 1 2\n0\nnan\n0 1\n0 0\n1 1\n",
        "1 2 1 2\n0\n1\n0 5\n0 0\n1 1\n",
        "1 2 1 2\n0\n1\n0 1\n0 0\n1 1\nextra\n",
        "3 1 1 1\n0 0 0\n0\n0\n",
        "1 99999999999 1 2\n",
    ] {
        assert!(Mesh::from_dump_str(text).is_err(), "{text:?}");
    }
}
