//! Skew-symmetric discretization of the convection term `(a . grad) u` for a
//! divergence-free advecting field `a`.
//!
//! The operator is assembled as `C = (T - T*) / 2` where `T` is a standard
//! MAC advective form (difference, multiply by the interpolated advecting
//! velocity, average back) and `T*` is its exact matrix transpose; `-T*` is a
//! consistent divergence form of the same term. The transpose pairing makes
//! `<C u, u> = 0` hold to rounding regardless of resolution, so convection
//! never injects energy into the discrete budget.

use crate::grid::VectorField;

/// Advective form `T(a) u ~ (a . grad) u` on interior faces.
pub fn apply_advective(a: &VectorField, u: &VectorField) -> VectorField {
    apply(a, u, false)
}

/// Exact transpose of [`apply_advective`] in the face inner product.
pub fn apply_advective_transpose(a: &VectorField, g: &VectorField) -> VectorField {
    apply(a, g, true)
}

/// Energy-neutral convection `C(a) u = (T u - T* u) / 2`.
pub fn convection(a: &VectorField, u: &VectorField) -> VectorField {
    let mut t = apply_advective(a, u);
    let tt = apply_advective_transpose(a, u);
    t.axpy(-1.0, &tt);
    t.scale(0.5);
    t
}

fn apply(a: &VectorField, u: &VectorField, transpose: bool) -> VectorField {
    assert_eq!(a.grid(), u.grid(), "grid mismatch");
    let grid = *u.grid();
    let dim = grid.dim();
    let h = grid.spacing();
    let dims = grid.dims();
    let mut out = VectorField::zeros(grid);

    for comp in 0..dim {
        let fd = grid.face_dims(comp);
        for adv in 0..dim {
            if adv == comp {
                // product positions: cell centers
                let [nx, ny, nz] = dims;
                let mut q = vec![0.0; grid.cell_count()];
                let u_c = u.comp(comp);
                let a_c = a.comp(comp);
                for k in 0..nz {
                    for j in 0..ny {
                        for i in 0..nx {
                            let cell = [i, j, k];
                            let lo = grid.face_idx(comp, i, j, k);
                            let mut up = cell;
                            up[comp] += 1;
                            let hi = grid.face_idx(comp, up[0], up[1], up[2]);
                            let coeff = 0.5 * (a_c[lo] + a_c[hi]);
                            let val = if transpose {
                                // V^T: gather the two adjacent face values
                                0.5 * (u_c[lo] + u_c[hi])
                            } else {
                                (u_c[hi] - u_c[lo]) / h[comp]
                            };
                            q[grid.cell_idx(i, j, k)] = coeff * val;
                        }
                    }
                }
                let out_c = out.comp_mut(comp);
                for k in 0..fd[2] {
                    for j in 0..fd[1] {
                        for i in 0..fd[0] {
                            if grid.is_boundary_face(comp, i, j, k) {
                                continue;
                            }
                            let mut lo = [i, j, k];
                            lo[comp] -= 1;
                            let lo_cell = grid.cell_idx(lo[0], lo[1], lo[2]);
                            let hi_cell = grid.cell_idx(i, j, k);
                            out_c[grid.face_idx(comp, i, j, k)] += if transpose {
                                // D^T: backward difference of the products
                                (q[lo_cell] - q[hi_cell]) / h[comp]
                            } else {
                                0.5 * (q[lo_cell] + q[hi_cell])
                            };
                        }
                    }
                }
            } else {
                // product positions: (comp, adv) edges
                let mut ed = fd;
                ed[adv] += 1;
                let eidx = |p: [usize; 3]| p[0] + ed[0] * (p[1] + ed[1] * p[2]);
                let mut q = vec![0.0; ed[0] * ed[1] * ed[2]];
                let n_adv = dims[adv];
                let u_c = u.comp(comp);
                let a_c = a.comp(adv);
                for k in 0..ed[2] {
                    for j in 0..ed[1] {
                        for i in 0..ed[0] {
                            let p = [i, j, k];
                            let fi = p[comp];
                            if fi == 0 || fi == fd[comp] - 1 {
                                continue; // advecting velocity averages to zero on walls
                            }
                            let e = p[adv];
                            // advecting component at the edge: mean over the
                            // two cells straddling the comp-face
                            let mut alo = p;
                            alo[comp] = fi - 1;
                            let ahi = p;
                            let coeff = 0.5
                                * (a_c[grid.face_idx(adv, alo[0], alo[1], alo[2])]
                                    + a_c[grid.face_idx(adv, ahi[0], ahi[1], ahi[2])]);
                            let val = if transpose {
                                // V^T with zero outside the cell range
                                let mut acc = 0.0;
                                if e < n_adv {
                                    acc += u_c[grid.face_idx(comp, p[0], p[1], p[2])];
                                }
                                if e >= 1 {
                                    let mut pm = p;
                                    pm[adv] = e - 1;
                                    acc += u_c[grid.face_idx(comp, pm[0], pm[1], pm[2])];
                                }
                                0.5 * acc
                            } else if e == 0 {
                                // mirror-negative ghost at the wall
                                2.0 * u_c[grid.face_idx(comp, p[0], p[1], p[2])] / h[adv]
                            } else if e == n_adv {
                                let mut pm = p;
                                pm[adv] = e - 1;
                                -2.0 * u_c[grid.face_idx(comp, pm[0], pm[1], pm[2])] / h[adv]
                            } else {
                                let mut pm = p;
                                pm[adv] = e - 1;
                                (u_c[grid.face_idx(comp, p[0], p[1], p[2])]
                                    - u_c[grid.face_idx(comp, pm[0], pm[1], pm[2])])
                                    / h[adv]
                            };
                            q[eidx(p)] = coeff * val;
                        }
                    }
                }
                let out_c = out.comp_mut(comp);
                for k in 0..fd[2] {
                    for j in 0..fd[1] {
                        for i in 0..fd[0] {
                            if grid.is_boundary_face(comp, i, j, k) {
                                continue;
                            }
                            let p = [i, j, k];
                            let c = p[adv];
                            let mut p1 = p;
                            p1[adv] += 1;
                            out_c[grid.face_idx(comp, i, j, k)] += if transpose {
                                // D^T including the doubled wall entries
                                let lo = if c == 0 { 2.0 * q[eidx(p)] } else { q[eidx(p)] };
                                let hi = if c + 1 == n_adv {
                                    2.0 * q[eidx(p1)]
                                } else {
                                    q[eidx(p1)]
                                };
                                (lo - hi) / h[adv]
                            } else {
                                0.5 * (q[eidx(p)] + q[eidx(p1)])
                            };
                        }
                    }
                }
            }
        }
    }
    out
}
