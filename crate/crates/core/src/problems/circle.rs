use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Block, Convexity, Expr, InnerVar, LinkingMatrix, LinkingVar, SeedColumn, StructuredModel, Triplet,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rectangle {
    pub width: f64,
    pub height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircleCuttingInstance {
    pub radii: Vec<f64>,
    pub rectangles: Vec<Rectangle>,
    pub seed: u64,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum InstanceCheck {
    #[error("radius {0} of circle {1} is not positive")]
    Radius(f64, usize),
    #[error("rectangle {0} has a non-positive side")]
    Side(usize),
    #[error("circle {0} fits in no rectangle")]
    NoFit(usize),
    #[error("instance has no {0}")]
    Empty(&'static str),
}

impl CircleCuttingInstance {
    pub fn check(&self) -> Result<(), InstanceCheck> {
        if self.radii.is_empty() {
            return Err(InstanceCheck::Empty("circles"));
        }
        if self.rectangles.is_empty() {
            return Err(InstanceCheck::Empty("rectangles"));
        }
        for (c, &r) in self.radii.iter().enumerate() {
            if !(r > 0.0) {
                return Err(InstanceCheck::Radius(r, c));
            }
        }
        for (i, rect) in self.rectangles.iter().enumerate() {
            if !(rect.width > 0.0 && rect.height > 0.0) {
                return Err(InstanceCheck::Side(i));
            }
        }
        for c in 0..self.radii.len() {
            if !self.rectangles.iter().any(|rect| fits(self.radii[c], rect)) {
                return Err(InstanceCheck::NoFit(c));
            }
        }
        Ok(())
    }

    /// Random instance with up to `max_circles` circles and `max_rects` rectangles.
    /// All circles fit side by side on shelves, so every instance is feasible.
    pub fn random(seed: u64, max_circles: usize, max_rects: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nc = rng.gen_range(1..=max_circles.max(1));
        let nr = rng.gen_range(1..=max_rects.max(1));
        let radii: Vec<f64> = (0..nc).map(|_| quarter(rng.gen_range(0.5..1.5))).collect();
        let rmax = radii.iter().cloned().fold(0.0, f64::max);
        let mut rectangles: Vec<Rectangle> = (0..nr)
            .map(|_| Rectangle { width: quarter(rng.gen_range(1.5..5.0)), height: quarter(rng.gen_range(1.5..4.0)) })
            .collect();
        let big = &mut rectangles[0];
        big.width = big.width.max(2.0 * rmax);
        big.height = big.height.max(2.0 * rmax);
        // shelf packing, largest first, widening rectangle 0 when nothing fits
        let mut order: Vec<usize> = (0..nc).collect();
        order.sort_by(|&a, &b| radii[b].total_cmp(&radii[a]));
        let mut used = vec![0.0; nr];
        for c in order {
            let d = 2.0 * radii[c];
            match (0..nr).find(|&i| rectangles[i].height >= d && used[i] + d <= rectangles[i].width) {
                Some(i) => used[i] += d,
                None => {
                    used[0] += d;
                    rectangles[0].width = rectangles[0].width.max(used[0]);
                }
            }
        }
        CircleCuttingInstance { radii, rectangles, seed }
    }
}

fn quarter(v: f64) -> f64 {
    (v * 4.0).round() / 4.0
}

fn fits(r: f64, rect: &Rectangle) -> bool {
    2.0 * r <= rect.width.min(rect.height)
}

fn cx(p: usize, c: usize) -> usize {
    p + 2 * c
}

fn cy(p: usize, c: usize) -> usize {
    p + 2 * c + 1
}

/// One block per rectangle: `y_c` assigns circle `c`, `z` holds the centres.
/// Each circle is assigned exactly once through two opposite rows.
pub fn encode_circle_cutting(inst: &CircleCuttingInstance) -> Result<StructuredModel, InstanceCheck> {
    inst.check()?;
    let nc = inst.radii.len();
    let mut blocks = Vec::with_capacity(inst.rectangles.len());
    let mut seed_columns = Vec::new();
    for (i, rect) in inst.rectangles.iter().enumerate() {
        blocks.push(rectangle_block(i, rect, &inst.radii));
        for (c, &r) in inst.radii.iter().enumerate() {
            if fits(r, rect) {
                let mut design = vec![0; nc];
                design[c] = 1;
                seed_columns.push(SeedColumn { block: i, design, cost: Some(rect.width * rect.height - PI * r * r) });
            }
        }
    }
    let rhs = (0..nc).flat_map(|_| [1.0, -1.0]).collect();
    Ok(StructuredModel {
        name: format!("circles-{}x{}-s{}", nc, inst.rectangles.len(), inst.seed),
        x: Vec::new(),
        cost: Vec::new(),
        rows: 2 * nc,
        a: Vec::new(),
        rhs,
        blocks,
        nonanticipative: false,
        monotone: false,
        seed_columns,
    })
}

fn rectangle_block(i: usize, rect: &Rectangle, radii: &[f64]) -> Block {
    let p = radii.len();
    let (w, h) = (rect.width, rect.height);
    let y: Vec<LinkingVar> = radii
        .iter()
        .enumerate()
        .map(|(c, &r)| LinkingVar { name: format!("assign{c}"), lo: 0, hi: i64::from(fits(r, rect)), weight: Some(PI * r * r) })
        .collect();
    let mut z = Vec::with_capacity(2 * p);
    for c in 0..p {
        z.push(InnerVar { name: format!("cx{c}"), lo: 0.0, hi: w, integer: false });
        z.push(InnerVar { name: format!("cy{c}"), lo: 0.0, hi: h, integer: false });
    }

    let mut constraints = Vec::new();
    for (c, &r) in radii.iter().enumerate() {
        if !fits(r, rect) {
            continue;
        }
        // r - c <= M (1 - y) and c + r - side <= M (1 - y) with M = side
        for (var, side) in [(cx(p, c), w), (cy(p, c), h)] {
            constraints.push(Expr::linear(r - side, &[(var, -1.0), (c, side)]));
            constraints.push(Expr::linear(r - 2.0 * side, &[(var, 1.0), (c, side)]));
        }
    }
    for a in 0..p {
        for b in a + 1..p {
            if !fits(radii[a], rect) || !fits(radii[b], rect) {
                continue;
            }
            let rr = (radii[a] + radii[b]).powi(2);
            let gate = Expr::mul(Expr::scaled_var(rr, a), Expr::var(b));
            let dist = Expr::sum(vec![
                Expr::sqr(Expr::linear(0.0, &[(cx(p, a), 1.0), (cx(p, b), -1.0)])),
                Expr::sqr(Expr::linear(0.0, &[(cy(p, a), 1.0), (cy(p, b), -1.0)])),
            ]);
            constraints.push(Expr::sub(gate, dist));
        }
    }

    // area * (1 - prod (1 - y_c)) - sum pi r^2 y_c
    let unused = (0..p).map(|c| Expr::linear(1.0, &[(c, -1.0)])).reduce(Expr::mul).expect("at least one circle");
    let area = w * h;
    let covered: Vec<(usize, f64)> = radii.iter().enumerate().map(|(c, &r)| (c, -PI * r * r)).collect();
    let objective = Expr::sum(vec![
        Expr::sub(Expr::constant(area), Expr::mul(Expr::constant(area), unused)),
        Expr::linear(0.0, &covered),
    ]);

    let mut entries = Vec::with_capacity(2 * p);
    for c in 0..p {
        entries.push(Triplet::new(2 * c, c, 1.0));
        entries.push(Triplet::new(2 * c + 1, c, -1.0));
    }

    Block {
        name: format!("rect{i}"),
        y,
        z,
        objective,
        constraints,
        linking: LinkingMatrix::new(2 * p, entries),
        convexity: Convexity::AtMostOne,
        z_candidates: shelf_candidates(radii),
    }
}

/// Assigned circles side by side along the width, then along the height.
/// Unassigned circles sit at `(r, r)`.
fn shelf_candidates(radii: &[f64]) -> Vec<Vec<Expr>> {
    let p = radii.len();
    let offset = |c: usize| -> Expr {
        let terms: Vec<(usize, f64)> = (0..c).map(|d| (d, 2.0 * radii[d])).collect();
        Expr::sum(vec![Expr::constant(radii[c]), Expr::mul(Expr::var(c), Expr::linear(0.0, &terms))])
    };
    let mut row = Vec::with_capacity(2 * p);
    let mut col = Vec::with_capacity(2 * p);
    for (c, &r) in radii.iter().enumerate() {
        row.push(offset(c));
        row.push(Expr::constant(r));
        col.push(Expr::constant(r));
        col.push(offset(c));
    }
    vec![row, col]
}
