//! Face-enumeration distances and winding-number containment, written
//! without reusing any library geometry routine.

use aerosense::geometry::{AirspaceGeometry, EnuPoint, GeoPoint, Region, RegionKind, RegionLayout};

const EDGE_TOL: f64 = 1e-9;

fn seg_dist(a: [f64; 2], b: [f64; 2], q: [f64; 2]) -> f64 {
    let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
    let len2 = ex * ex + ey * ey;
    let t = (((q[0] - a[0]) * ex + (q[1] - a[1]) * ey) / len2).clamp(0.0, 1.0);
    let (px, py) = (a[0] + t * ex, a[1] + t * ey);
    ((q[0] - px).powi(2) + (q[1] - py).powi(2)).sqrt()
}

/// Winding number test; points on an edge count as inside.
pub fn polygon_contains(poly: &[[f64; 2]], q: [f64; 2]) -> bool {
    let n = poly.len();
    if (0..n).any(|i| seg_dist(poly[i], poly[(i + 1) % n], q) <= EDGE_TOL) {
        return true;
    }
    let mut winding = 0i32;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let cross = (b[0] - a[0]) * (q[1] - a[1]) - (q[0] - a[0]) * (b[1] - a[1]);
        if a[1] <= q[1] {
            if b[1] > q[1] && cross > 0.0 {
                winding += 1;
            }
        } else if b[1] <= q[1] && cross < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

pub fn prism_contains(r: &Region, p: &EnuPoint) -> bool {
    p.up >= r.floor() && p.up <= r.ceiling() && polygon_contains(r.footprint(), [p.east, p.north])
}

/// Distance to the prism surface as the minimum over its faces: one
/// vertical rectangle per edge plus the floor and ceiling polygons.
pub fn prism_surface_distance(r: &Region, p: &EnuPoint) -> f64 {
    let poly = r.footprint();
    let n = poly.len();
    let q = [p.east, p.north];
    let dz_band = if p.up < r.floor() {
        r.floor() - p.up
    } else if p.up > r.ceiling() {
        p.up - r.ceiling()
    } else {
        0.0
    };
    let mut best = f64::INFINITY;
    for i in 0..n {
        let d = seg_dist(poly[i], poly[(i + 1) % n], q);
        best = best.min((d * d + dz_band * dz_band).sqrt());
    }
    if polygon_contains(poly, q) {
        best = best.min((p.up - r.floor()).abs()).min((p.up - r.ceiling()).abs());
    }
    best
}

/// Signed distance to AP ∪ AR. Only surfaces on the outside of the union
/// count: both prisms when disjoint, the outer one when nested.
pub fn oracle_signed_distance(g: &AirspaceGeometry, p: &EnuPoint) -> f64 {
    let inside = prism_contains(g.ap(), p) || prism_contains(g.ar(), p);
    let d = match g.layout() {
        RegionLayout::Disjoint => prism_surface_distance(g.ap(), p).min(prism_surface_distance(g.ar(), p)),
        RegionLayout::ApInsideAr => prism_surface_distance(g.ar(), p),
        RegionLayout::ArInsideAp => prism_surface_distance(g.ap(), p),
    };
    if inside {
        -d
    } else {
        d
    }
}

fn origin() -> GeoPoint {
    GeoPoint {
        latitude: 31.0,
        longitude: 121.0,
        altitude: 0.0,
    }
}

/// Stacked default terminal, a nested pair, and side-by-side concave regions.
pub fn fixed_geometries() -> Vec<(&'static str, AirspaceGeometry)> {
    let nested_ar = Region::new(
        RegionKind::Ar,
        vec![[-60_000.0, -50_000.0], [70_000.0, -40_000.0], [55_000.0, 65_000.0], [-10_000.0, 20_000.0], [-65_000.0, 45_000.0]],
        0.0,
        12_000.0,
    )
    .unwrap();
    let nested_ap = Region::new(
        RegionKind::Ap,
        vec![[-15_000.0, -15_000.0], [15_000.0, -15_000.0], [15_000.0, 10_000.0], [-15_000.0, 10_000.0]],
        0.0,
        4_000.0,
    )
    .unwrap();
    let l_ar = Region::new(
        RegionKind::Ar,
        vec![[0.0, 0.0], [80_000.0, 0.0], [80_000.0, 30_000.0], [30_000.0, 30_000.0], [30_000.0, 90_000.0], [0.0, 90_000.0]],
        2_000.0,
        9_000.0,
    )
    .unwrap();
    let side_ap = Region::new(
        RegionKind::Ap,
        vec![[-40_000.0, 10_000.0], [-5_000.0, 5_000.0], [-10_000.0, 40_000.0]],
        0.0,
        5_000.0,
    )
    .unwrap();
    vec![
        ("stacked", AirspaceGeometry::default_terminal()),
        ("nested", AirspaceGeometry::new(origin(), nested_ap, nested_ar, 50_000.0).unwrap()),
        ("side_by_side", AirspaceGeometry::new(origin(), side_ap, l_ar, 50_000.0).unwrap()),
    ]
}

#[derive(Debug, Clone, Copy)]
pub struct GridResult {
    pub points: usize,
    pub max_abs_error: f64,
    pub cell_diagonal: f64,
    pub sign_mismatches: usize,
}

/// Compare `signed_distance` with the oracle on every node of an
/// `nx × ny × nz` grid spanning the regions plus a 20 km apron.
pub fn grid_check(g: &AirspaceGeometry, nx: usize, ny: usize, nz: usize) -> GridResult {
    let verts = g.ap().footprint().iter().chain(g.ar().footprint());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for v in verts {
        x0 = x0.min(v[0]);
        x1 = x1.max(v[0]);
        y0 = y0.min(v[1]);
        y1 = y1.max(v[1]);
    }
    let apron = 20_000.0;
    let (x0, x1, y0, y1) = (x0 - apron, x1 + apron, y0 - apron, y1 + apron);
    let z0 = g.ap().floor().min(g.ar().floor()) - 2_000.0;
    let z1 = g.ap().ceiling().max(g.ar().ceiling()) + 2_000.0;
    let (dx, dy, dz) = (
        (x1 - x0) / (nx - 1) as f64,
        (y1 - y0) / (ny - 1) as f64,
        (z1 - z0) / (nz - 1) as f64,
    );
    let mut res = GridResult {
        points: 0,
        max_abs_error: 0.0,
        cell_diagonal: (dx * dx + dy * dy + dz * dz).sqrt(),
        sign_mismatches: 0,
    };
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let p = EnuPoint::new(x0 + i as f64 * dx, y0 + j as f64 * dy, z0 + k as f64 * dz);
                let got = aerosense::geometry::signed_distance(g, &p);
                let want = oracle_signed_distance(g, &p);
                res.points += 1;
                res.max_abs_error = res.max_abs_error.max((got - want).abs());
                if (got <= 0.0) != (want <= 0.0) {
                    res.sign_mismatches += 1;
                }
            }
        }
    }
    res
}
