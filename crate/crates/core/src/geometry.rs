//! Terminal-airspace geometry.
//!
//! Regions are vertical polygonal prisms expressed in a local east/north/up
//! tangent frame anchored at the airport reference point. All metric
//! computations (containment, surface distance, signed distance to the
//! controlled airspace, approach factor) happen in that frame.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius used by the tangent-plane projection, meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Default margin of the uncontrolled band around the controlled airspace, meters.
pub const DEFAULT_SCOPE_MARGIN_M: f64 = 100_000.0;

/// Default regularizer in the approach-factor denominator.
pub const DEFAULT_APPROACH_EPS: f64 = 1e-8;

/// Tolerance used to classify a horizontal point as lying on a footprint edge.
const ON_EDGE_TOL: f64 = 1e-9;

pub const GEOMETRY_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid geographic point: {0}")]
    InvalidPoint(String),
    #[error("region {name}: {reason}")]
    InvalidRegion { name: String, reason: String },
    #[error("AP and AR must be either nested or disjoint: {0}")]
    OverlappingRegions(String),
    #[error("scope margin must be positive, got {0}")]
    InvalidMargin(f64),
    #[error("unsupported geometry_version {0}")]
    UnsupportedVersion(u32),
    #[error("geometry document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
}

impl GeoPoint {
    pub fn new(latitude: f64, longitude: f64, altitude: f64) -> Result<Self, GeometryError> {
        let p = Self {
            latitude,
            longitude,
            altitude,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.latitude.is_finite() && (-90.0..=90.0).contains(&self.latitude)) {
            return Err(GeometryError::InvalidPoint(format!(
                "latitude {} outside [-90, 90]",
                self.latitude
            )));
        }
        if !(self.longitude.is_finite() && (-180.0..=180.0).contains(&self.longitude)) {
            return Err(GeometryError::InvalidPoint(format!(
                "longitude {} outside [-180, 180]",
                self.longitude
            )));
        }
        if !(self.altitude.is_finite() && self.altitude >= -500.0) {
            return Err(GeometryError::InvalidPoint(format!(
                "altitude {} below -500 m",
                self.altitude
            )));
        }
        Ok(())
    }
}

/// A point (or vector) in the local east/north/up frame, meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnuPoint {
    pub east: f64,
    pub north: f64,
    pub up: f64,
}

impl EnuPoint {
    pub const fn new(east: f64, north: f64, up: f64) -> Self {
        Self { east, north, up }
    }

    pub fn dot(&self, other: &EnuPoint) -> f64 {
        self.east * other.east + self.north * other.north + self.up * other.up
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, k: f64) -> EnuPoint {
        EnuPoint::new(self.east * k, self.north * k, self.up * k)
    }

    pub fn horizontal(&self) -> [f64; 2] {
        [self.east, self.north]
    }
}

impl std::ops::Add for EnuPoint {
    type Output = EnuPoint;
    fn add(self, rhs: EnuPoint) -> EnuPoint {
        EnuPoint::new(self.east + rhs.east, self.north + rhs.north, self.up + rhs.up)
    }
}

impl std::ops::Sub for EnuPoint {
    type Output = EnuPoint;
    fn sub(self, rhs: EnuPoint) -> EnuPoint {
        EnuPoint::new(self.east - rhs.east, self.north - rhs.north, self.up - rhs.up)
    }
}

/// Equirectangular projection onto the tangent plane at `origin`.
pub fn geo_to_enu(p: &GeoPoint, origin: &GeoPoint) -> EnuPoint {
    let lat0 = origin.latitude.to_radians();
    let dlat = (p.latitude - origin.latitude).to_radians();
    let dlon = (p.longitude - origin.longitude).to_radians();
    EnuPoint {
        east: EARTH_RADIUS_M * lat0.cos() * dlon,
        north: EARTH_RADIUS_M * dlat,
        up: p.altitude - origin.altitude,
    }
}

/// Inverse of [`geo_to_enu`].
pub fn enu_to_geo(e: &EnuPoint, origin: &GeoPoint) -> GeoPoint {
    let lat0 = origin.latitude.to_radians();
    GeoPoint {
        latitude: origin.latitude + (e.north / EARTH_RADIUS_M).to_degrees(),
        longitude: origin.longitude + (e.east / (EARTH_RADIUS_M * lat0.cos())).to_degrees(),
        altitude: origin.altitude + e.up,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionKind {
    #[serde(rename = "AP")]
    Ap,
    #[serde(rename = "AR")]
    Ar,
}

impl RegionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionKind::Ap => "AP",
            RegionKind::Ar => "AR",
        }
    }
}

impl std::fmt::Display for RegionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A vertical prism: simple polygon footprint (counter-clockwise, ENU meters)
/// extruded between `floor` and `ceiling`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    name: RegionKind,
    footprint: Vec<[f64; 2]>,
    floor: f64,
    ceiling: f64,
}

impl Region {
    pub fn new(
        name: RegionKind,
        mut footprint: Vec<[f64; 2]>,
        floor: f64,
        ceiling: f64,
    ) -> Result<Self, GeometryError> {
        let invalid = |reason: String| GeometryError::InvalidRegion {
            name: name.to_string(),
            reason,
        };
        // a closing vertex equal to the first one is tolerated
        if footprint.len() > 3 && footprint.first() == footprint.last() {
            footprint.pop();
        }
        if footprint.len() < 3 {
            return Err(invalid(format!(
                "footprint needs at least 3 vertices, got {}",
                footprint.len()
            )));
        }
        if footprint.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite footprint vertex".into()));
        }
        if !(floor.is_finite() && ceiling.is_finite() && floor < ceiling) {
            return Err(invalid(format!(
                "altitude band [{floor}, {ceiling}] must satisfy floor < ceiling"
            )));
        }
        let area = signed_area(&footprint);
        if area == 0.0 {
            return Err(invalid("footprint has zero area".into()));
        }
        if !is_simple(&footprint) {
            return Err(invalid("footprint is self-intersecting".into()));
        }
        if area < 0.0 {
            footprint.reverse();
        }
        Ok(Self {
            name,
            footprint,
            floor,
            ceiling,
        })
    }

    pub fn name(&self) -> RegionKind {
        self.name
    }

    pub fn footprint(&self) -> &[[f64; 2]] {
        &self.footprint
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn ceiling(&self) -> f64 {
        self.ceiling
    }

    fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.footprint.len();
        (0..n).map(move |i| (self.footprint[i], self.footprint[(i + 1) % n]))
    }

    /// Horizontal distance to the nearest footprint edge.
    fn edge_distance(&self, q: [f64; 2]) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(q, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Footprint containment with boundary points counted inside.
    fn footprint_contains(&self, q: [f64; 2]) -> bool {
        if self.edge_distance(q) <= ON_EDGE_TOL {
            return true;
        }
        crossing_number_inside(&self.footprint, q)
    }

    fn band_contains(&self, up: f64) -> bool {
        up >= self.floor && up <= self.ceiling
    }

    fn translated(&self, offset: EnuPoint) -> Region {
        Region {
            name: self.name,
            footprint: self
                .footprint
                .iter()
                .map(|v| [v[0] + offset.east, v[1] + offset.north])
                .collect(),
            floor: self.floor + offset.up,
            ceiling: self.ceiling + offset.up,
        }
    }
}

/// Shoelace signed area; positive for counter-clockwise order.
fn signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let a = poly[i];
            let b = poly[(i + 1) % n];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    twice / 2.0
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

/// Closed-segment intersection test (touching counts).
fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(a, c, d))
        || (d2 == 0.0 && on_segment(b, c, d))
        || (d3 == 0.0 && on_segment(c, a, b))
        || (d4 == 0.0 && on_segment(d, a, b))
}

fn is_simple(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if a == b {
            return false;
        }
        for j in (i + 1)..n {
            let adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if adjacent {
                continue;
            }
            let (c, d) = (poly[j], poly[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return false;
            }
        }
    }
    true
}

fn point_segment_distance(q: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let aq = [q[0] - a[0], q[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((aq[0] * ab[0] + aq[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dx = aq[0] - t * ab[0];
    let dy = aq[1] - t * ab[1];
    dx.hypot(dy)
}

/// Even-odd ray casting toward +east.
fn crossing_number_inside(poly: &[[f64; 2]], q: [f64; 2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (poly[i], poly[j]);
        if (pi[1] > q[1]) != (pj[1] > q[1]) {
            let x_cross = pi[0] + (q[1] - pi[1]) * (pj[0] - pi[0]) / (pj[1] - pi[1]);
            if q[0] < x_cross {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// True iff `p` lies in the closed prism (walls, floor and ceiling count as inside).
pub fn contains(region: &Region, p: &EnuPoint) -> bool {
    region.band_contains(p.up) && region.footprint_contains(p.horizontal())
}

/// Minimum Euclidean distance from `p` to the prism surface.
pub fn boundary_distance(region: &Region, p: &EnuPoint) -> f64 {
    let q = p.horizontal();
    let edge = region.edge_distance(q);
    let inside_2d = edge <= ON_EDGE_TOL || crossing_number_inside(&region.footprint, q);
    let in_band = region.band_contains(p.up);
    if inside_2d && in_band {
        edge.min(p.up - region.floor).min(region.ceiling - p.up)
    } else {
        // distance to a product set: horizontal and vertical gaps combine in quadrature
        let dxy = if inside_2d { 0.0 } else { edge };
        let dz = if p.up < region.floor {
            region.floor - p.up
        } else if p.up > region.ceiling {
            p.up - region.ceiling
        } else {
            0.0
        };
        dxy.hypot(dz)
    }
}

/// Distance to the closed prism viewed as a solid: zero inside.
pub fn interior_distance(region: &Region, p: &EnuPoint) -> f64 {
    if contains(region, p) {
        0.0
    } else {
        boundary_distance(region, p)
    }
}

/// Area-weighted footprint centroid at mid-band altitude.
pub fn region_center(region: &Region) -> EnuPoint {
    let poly = &region.footprint;
    let n = poly.len();
    let (mut cx, mut cy, mut twice_area) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let w = a[0] * b[1] - b[0] * a[1];
        twice_area += w;
        cx += (a[0] + b[0]) * w;
        cy += (a[1] + b[1]) * w;
    }
    let six_area = 3.0 * twice_area;
    EnuPoint::new(cx / six_area, cy / six_area, 0.5 * (region.floor + region.ceiling))
}

/// Cosine between the velocity and the direction from `p` to the region center.
pub fn approach_factor(p: &EnuPoint, velocity: &EnuPoint, region: &Region, eps: f64) -> f64 {
    let to_center = region_center(region) - *p;
    velocity.dot(&to_center) / (velocity.norm() * to_center.norm() + eps)
}

/// How the two controlled regions relate; validated once at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionLayout {
    Disjoint,
    ApInsideAr,
    ArInsideAp,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AirspaceGeometry {
    origin: GeoPoint,
    ap: Region,
    ar: Region,
    scope_margin: f64,
    layout: RegionLayout,
}

impl AirspaceGeometry {
    pub fn new(origin: GeoPoint, ap: Region, ar: Region, scope_margin: f64) -> Result<Self, GeometryError> {
        origin.validate()?;
        if !(scope_margin.is_finite() && scope_margin > 0.0) {
            return Err(GeometryError::InvalidMargin(scope_margin));
        }
        if ap.name != RegionKind::Ap || ar.name != RegionKind::Ar {
            return Err(GeometryError::Document("regions must be named AP and AR".into()));
        }
        let layout = classify_layout(&ap, &ar)?;
        Ok(Self {
            origin,
            ap,
            ar,
            scope_margin,
            layout,
        })
    }

    pub fn origin(&self) -> &GeoPoint {
        &self.origin
    }

    pub fn ap(&self) -> &Region {
        &self.ap
    }

    pub fn ar(&self) -> &Region {
        &self.ar
    }

    pub fn region(&self, kind: RegionKind) -> &Region {
        match kind {
            RegionKind::Ap => &self.ap,
            RegionKind::Ar => &self.ar,
        }
    }

    pub fn scope_margin(&self) -> f64 {
        self.scope_margin
    }

    pub fn layout(&self) -> RegionLayout {
        self.layout
    }

    pub fn to_enu(&self, p: &GeoPoint) -> EnuPoint {
        geo_to_enu(p, &self.origin)
    }

    pub fn to_geo(&self, e: &EnuPoint) -> GeoPoint {
        enu_to_geo(e, &self.origin)
    }

    /// Membership in the controlled airspace AP ∪ AR.
    pub fn in_controlled(&self, p: &EnuPoint) -> bool {
        contains(&self.ap, p) || contains(&self.ar, p)
    }

    /// Same geometry shifted rigidly in the ENU frame.
    pub fn translated(&self, offset: EnuPoint) -> AirspaceGeometry {
        AirspaceGeometry {
            origin: self.origin,
            ap: self.ap.translated(offset),
            ar: self.ar.translated(offset),
            scope_margin: self.scope_margin,
            layout: self.layout,
        }
    }
}

fn prism_within(inner: &Region, outer: &Region) -> bool {
    if inner.floor < outer.floor || inner.ceiling > outer.ceiling {
        return false;
    }
    if !inner.footprint.iter().all(|&v| outer.footprint_contains(v)) {
        return false;
    }
    // no inner edge may cross an outer edge at an interior point of both
    inner.edges().all(|(a, b)| {
        outer.edges().all(|(c, d)| {
            let d1 = cross(c, d, a);
            let d2 = cross(c, d, b);
            let d3 = cross(a, b, c);
            let d4 = cross(a, b, d);
            !(((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
                && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)))
        })
    })
}

fn footprints_disjoint(a: &Region, b: &Region) -> bool {
    let touching = a
        .edges()
        .any(|(p, q)| b.edges().any(|(r, s)| segments_intersect(p, q, r, s)));
    !touching && !a.footprint_contains(b.footprint[0]) && !b.footprint_contains(a.footprint[0])
}

fn classify_layout(ap: &Region, ar: &Region) -> Result<RegionLayout, GeometryError> {
    let bands_disjoint = ap.ceiling < ar.floor || ar.ceiling < ap.floor;
    if bands_disjoint || footprints_disjoint(ap, ar) {
        return Ok(RegionLayout::Disjoint);
    }
    if prism_within(ap, ar) {
        return Ok(RegionLayout::ApInsideAr);
    }
    if prism_within(ar, ap) {
        return Ok(RegionLayout::ArInsideAp);
    }
    Err(GeometryError::OverlappingRegions(
        "the closed prisms intersect without one containing the other".into(),
    ))
}

/// Signed distance to the boundary of AP ∪ AR: negative inside, positive outside.
pub fn signed_distance(geometry: &AirspaceGeometry, p: &EnuPoint) -> f64 {
    let in_ap = contains(&geometry.ap, p);
    let in_ar = contains(&geometry.ar, p);
    if !(in_ap || in_ar) {
        return boundary_distance(&geometry.ap, p).min(boundary_distance(&geometry.ar, p));
    }
    // Inside: the nearest union-boundary point lies on the enclosing prism.
    let enclosing = match geometry.layout {
        RegionLayout::ApInsideAr => &geometry.ar,
        RegionLayout::ArInsideAp => &geometry.ap,
        RegionLayout::Disjoint => {
            if in_ap {
                &geometry.ap
            } else {
                &geometry.ar
            }
        }
    };
    -boundary_distance(enclosing, p)
}

/// Membership in the combined scope Ω: signed distance at most the scope margin.
pub fn in_combined_scope(geometry: &AirspaceGeometry, p: &EnuPoint) -> bool {
    signed_distance(geometry, p) <= geometry.scope_margin
}

// ---------------------------------------------------------------------------
// JSON document

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GeometryDocument {
    pub geometry_version: u32,
    pub origin: GeoPoint,
    pub ap: RegionDocument,
    pub ar: RegionDocument,
    #[serde(default = "default_margin")]
    pub scope_margin_d: f64,
}

fn default_margin() -> f64 {
    DEFAULT_SCOPE_MARGIN_M
}

/// A region as stored on disk: footprint vertices in degrees.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegionDocument {
    /// `[latitude, longitude]` pairs.
    pub footprint: Vec<[f64; 2]>,
    pub floor_m: f64,
    pub ceiling_m: f64,
}

impl AirspaceGeometry {
    pub fn from_document(doc: &GeometryDocument) -> Result<Self, GeometryError> {
        if doc.geometry_version != GEOMETRY_VERSION {
            return Err(GeometryError::UnsupportedVersion(doc.geometry_version));
        }
        doc.origin.validate()?;
        let region = |kind, r: &RegionDocument| -> Result<Region, GeometryError> {
            let mut footprint = Vec::with_capacity(r.footprint.len());
            for &[lat, lon] in &r.footprint {
                let g = GeoPoint::new(lat, lon, doc.origin.altitude)?;
                footprint.push(geo_to_enu(&g, &doc.origin).horizontal());
            }
            Region::new(kind, footprint, r.floor_m, r.ceiling_m)
        };
        AirspaceGeometry::new(
            doc.origin,
            region(RegionKind::Ap, &doc.ap)?,
            region(RegionKind::Ar, &doc.ar)?,
            doc.scope_margin_d,
        )
    }

    pub fn to_document(&self) -> GeometryDocument {
        let region = |r: &Region| RegionDocument {
            footprint: r
                .footprint
                .iter()
                .map(|v| {
                    let g = enu_to_geo(&EnuPoint::new(v[0], v[1], 0.0), &self.origin);
                    [g.latitude, g.longitude]
                })
                .collect(),
            floor_m: r.floor,
            ceiling_m: r.ceiling,
        };
        GeometryDocument {
            geometry_version: GEOMETRY_VERSION,
            origin: self.origin,
            ap: region(&self.ap),
            ar: region(&self.ar),
            scope_margin_d: self.scope_margin,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, GeometryError> {
        let doc: GeometryDocument =
            serde_json::from_str(text).map_err(|e| GeometryError::Document(e.to_string()))?;
        Self::from_document(&doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("geometry document serializes")
    }

    /// Stable hex digest identifying this geometry; stored in checkpoints.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(GEOMETRY_VERSION.to_le_bytes());
        for v in [self.origin.latitude, self.origin.longitude, self.origin.altitude, self.scope_margin] {
            hasher.update(v.to_bits().to_le_bytes());
        }
        for r in [&self.ap, &self.ar] {
            hasher.update(r.name.as_str().as_bytes());
            hasher.update(r.floor.to_bits().to_le_bytes());
            hasher.update(r.ceiling.to_bits().to_le_bytes());
            for v in &r.footprint {
                hasher.update(v[0].to_bits().to_le_bytes());
                hasher.update(v[1].to_bits().to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }

    /// A stylized single-airport terminal area: an octagonal approach
    /// region (surface to 6 000 m) stacked under a larger irregular control
    /// region (6 100 m to 14 000 m).
    pub fn default_terminal() -> Self {
        let origin = GeoPoint {
            latitude: 31.0,
            longitude: 121.0,
            altitude: 0.0,
        };
        let octagon: Vec<[f64; 2]> = (0..8)
            .map(|k| {
                let a = std::f64::consts::PI / 8.0 + k as f64 * std::f64::consts::PI / 4.0;
                [40_000.0 * a.cos(), 40_000.0 * a.sin()]
            })
            .collect();
        let ar_radii = [120_000.0, 135_000.0, 110_000.0, 125_000.0, 130_000.0, 115_000.0, 120_000.0, 128_000.0, 112_000.0, 122_000.0];
        let ar_poly: Vec<[f64; 2]> = ar_radii
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let a = k as f64 * 2.0 * std::f64::consts::PI / ar_radii.len() as f64;
                [r * a.cos(), r * a.sin()]
            })
            .collect();
        let ap = Region::new(RegionKind::Ap, octagon, 0.0, 6_000.0).expect("valid AP");
        let ar = Region::new(RegionKind::Ar, ar_poly, 6_100.0, 14_000.0).expect("valid AR");
        AirspaceGeometry::new(origin, ap, ar, DEFAULT_SCOPE_MARGIN_M).expect("valid terminal geometry")
    }
}

impl<'de> Deserialize<'de> for AirspaceGeometry {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = GeometryDocument::deserialize(d)?;
        AirspaceGeometry::from_document(&doc).map_err(serde::de::Error::custom)
    }
}
