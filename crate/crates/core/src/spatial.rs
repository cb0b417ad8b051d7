//! Uniform-grid spatial hash for neighbor queries over many agents.

use crate::geom::Vec2;

#[derive(Debug, Clone)]
pub struct SpatialHash {
    cell: f64,
    origin: Vec2,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<u32>>,
}

impl SpatialHash {
    /// Build from indexed positions. Entries outside `[origin, origin+extent]`
    /// clamp into the border buckets.
    pub fn build(
        origin: Vec2,
        extent: Vec2,
        cell: f64,
        positions: impl Iterator<Item = (u32, Vec2)>,
    ) -> SpatialHash {
        let cols = (extent.x / cell).ceil().max(1.0) as usize;
        let rows = (extent.y / cell).ceil().max(1.0) as usize;
        let mut hash = SpatialHash {
            cell,
            origin,
            cols,
            rows,
            buckets: vec![Vec::new(); cols * rows],
        };
        for (id, p) in positions {
            let b = hash.bucket_of(p);
            hash.buckets[b].push(id);
        }
        hash
    }

    fn bucket_of(&self, p: Vec2) -> usize {
        let cx = (((p.x - self.origin.x) / self.cell).floor() as i64).clamp(0, self.cols as i64 - 1);
        let cy = (((p.y - self.origin.y) / self.cell).floor() as i64).clamp(0, self.rows as i64 - 1);
        cy as usize * self.cols + cx as usize
    }

    /// Append ids of all buckets overlapping the disc at `pos` with `radius`.
    /// Callers filter by exact distance; this is the broad phase only.
    pub fn candidates_into(&self, pos: Vec2, radius: f64, out: &mut Vec<u32>) {
        let lo_x = (((pos.x - radius - self.origin.x) / self.cell).floor() as i64).clamp(0, self.cols as i64 - 1);
        let hi_x = (((pos.x + radius - self.origin.x) / self.cell).floor() as i64).clamp(0, self.cols as i64 - 1);
        let lo_y = (((pos.y - radius - self.origin.y) / self.cell).floor() as i64).clamp(0, self.rows as i64 - 1);
        let hi_y = (((pos.y + radius - self.origin.y) / self.cell).floor() as i64).clamp(0, self.rows as i64 - 1);
        for cy in lo_y..=hi_y {
            for cx in lo_x..=hi_x {
                out.extend_from_slice(&self.buckets[cy as usize * self.cols + cx as usize]);
            }
        }
    }

    pub fn candidates(&self, pos: Vec2, radius: f64) -> Vec<u32> {
        let mut out = Vec::new();
        self.candidates_into(pos, radius, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vec2;
    use crate::rng::SplitMix64;

    #[test]
    fn candidates_superset_of_brute_force() {
        let mut rng = SplitMix64::new(0xB0);
        let positions: Vec<(u32, Vec2)> = (0..300)
            .map(|i| (i, vec2(rng.range_f64(0.0, 20.0), rng.range_f64(0.0, 12.0))))
            .collect();
        let hash = SpatialHash::build(vec2(0.0, 0.0), vec2(20.0, 12.0), 2.0, positions.iter().copied());
        for _ in 0..50 {
            let q = vec2(rng.range_f64(-1.0, 21.0), rng.range_f64(-1.0, 13.0));
            let r = rng.range_f64(0.1, 5.0);
            let cand = hash.candidates(q, r);
            for &(id, p) in &positions {
                if p.distance(q) <= r {
                    assert!(cand.contains(&id), "agent {id} missing from candidates");
                }
            }
        }
    }
}
