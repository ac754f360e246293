//! Planar geometry for routes: vectors and arc-length parameterized
//! polylines with projection.

/// A 2D vector / point in the math frame (x right, y up, angles CCW).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// Z component of the cross product (positive when `o` is to the left).
    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn dist(self, o: Vec2) -> f64 {
        self.sub(o).norm()
    }

    /// Left-hand unit normal of a unit vector.
    pub fn left_normal(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn normalized(self) -> Vec2 {
        let n = self.norm();
        if n > 0.0 {
            self.scale(1.0 / n)
        } else {
            Vec2::new(1.0, 0.0)
        }
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }
}

/// Where a point lands on a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the closest point, in [0, length].
    pub arc: f64,
    /// Signed lateral offset; positive is left of the travel direction.
    pub lateral: f64,
    /// The closest point itself.
    pub point: Vec2,
}

/// An open polyline with a precomputed arc-length table.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Vec2>,
    /// cum[i] is the arc length at points[i]; cum[0] = 0.
    cum: Vec<f64>,
}

impl Polyline {
    /// Build from at least two points; zero-length segments are dropped.
    pub fn new(points: Vec<Vec2>) -> Result<Self, String> {
        let mut cleaned: Vec<Vec2> = Vec::with_capacity(points.len());
        for p in points {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err("polyline contains a non-finite point".to_string());
            }
            if cleaned.last().map(|q| q.dist(p) < 1e-9).unwrap_or(false) {
                continue;
            }
            cleaned.push(p);
        }
        if cleaned.len() < 2 {
            return Err(format!("polyline needs >= 2 distinct points, got {}", cleaned.len()));
        }
        let mut cum = Vec::with_capacity(cleaned.len());
        cum.push(0.0);
        for pair in cleaned.windows(2) {
            cum.push(cum.last().unwrap() + pair[0].dist(pair[1]));
        }
        Ok(Polyline { points: cleaned, cum })
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    /// Segment index and local offset for a (clamped) arc length.
    fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.length());
        // First index with cum > s, minus one: the segment containing s.
        let i = self.cum.partition_point(|&c| c <= s).min(self.cum.len() - 1) - 1;
        (i, s - self.cum[i])
    }

    /// Point at an arc length (clamped to the ends).
    pub fn point_at(&self, s: f64) -> Vec2 {
        let (i, off) = self.locate(s);
        let dir = self.points[i + 1].sub(self.points[i]).normalized();
        self.points[i].add(dir.scale(off))
    }

    /// Unit tangent at an arc length (constant within a segment).
    pub fn tangent_at(&self, s: f64) -> Vec2 {
        let (i, _) = self.locate(s);
        self.points[i + 1].sub(self.points[i]).normalized()
    }

    /// Closest point on the polyline, scanning every segment.
    pub fn project(&self, p: Vec2) -> Projection {
        let mut best_d2 = f64::INFINITY;
        let mut best_arc = 0.0;
        let mut best_point = self.points[0];
        let mut best_seg = 0;
        for i in 0..self.points.len() - 1 {
            let a = self.points[i];
            let b = self.points[i + 1];
            let ab = b.sub(a);
            let t = (p.sub(a).dot(ab) / ab.norm2()).clamp(0.0, 1.0);
            let q = a.add(ab.scale(t));
            let d2 = p.sub(q).norm2();
            if d2 < best_d2 {
                best_d2 = d2;
                best_arc = self.cum[i] + ab.norm() * t;
                best_point = q;
                best_seg = i;
            }
        }
        let tangent = self.points[best_seg + 1].sub(self.points[best_seg]).normalized();
        let offset = p.sub(best_point);
        let lateral = tangent.cross(offset).signum() * offset.norm();
        Projection { arc: best_arc, lateral, point: best_point }
    }
}

/// Sampled route shapes composed of straights and arcs.
pub struct RouteBuilder {
    points: Vec<Vec2>,
    heading: f64,
    /// Sampling step in meters.
    step: f64,
}

impl RouteBuilder {
    pub fn new(start: Vec2, heading: f64, step: f64) -> Self {
        RouteBuilder { points: vec![start], heading, step }
    }

    fn tip(&self) -> Vec2 {
        *self.points.last().unwrap()
    }

    pub fn straight(mut self, len: f64) -> Self {
        let dir = Vec2::new(self.heading.cos(), self.heading.sin());
        let n = (len / self.step).ceil().max(1.0) as usize;
        let start = self.tip();
        for i in 1..=n {
            let d = len * i as f64 / n as f64;
            self.points.push(start.add(dir.scale(d)));
        }
        self
    }

    /// Circular arc; positive angle turns left (CCW), negative turns right.
    pub fn arc(mut self, radius: f64, angle: f64) -> Self {
        let side = angle.signum();
        let center = self.tip().add(
            Vec2::new(self.heading.cos(), self.heading.sin())
                .left_normal()
                .scale(side * radius),
        );
        let start_angle = self.tip().sub(center).angle();
        let arc_len = radius * angle.abs();
        let n = (arc_len / self.step).ceil().max(2.0) as usize;
        for i in 1..=n {
            let a = start_angle + angle * i as f64 / n as f64;
            self.points
                .push(center.add(Vec2::new(a.cos(), a.sin()).scale(radius)));
        }
        self.heading += angle;
        self
    }

    pub fn build(self) -> Result<Polyline, String> {
        Polyline::new(self.points)
    }
}
