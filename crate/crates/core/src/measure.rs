//! Discrete measures on a ground space and measures on powers of its cone.

use crate::error::{invalid, HkError, Result};
use crate::space::{ConePoint, GroundSpace, Point};

/// Points of Euclidean and sphere spaces closer than this are merged.
pub const MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub point: Point,
    pub mass: f64,
}

/// A finitely supported nonnegative measure `Σ m_k δ_{x_k}`.
///
/// Masses are strictly positive, duplicate points are merged and the empty
/// atom list is the null measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    space: GroundSpace,
    atoms: Vec<Atom>,
}

impl DiscreteMeasure {
    pub fn new(space: GroundSpace, atoms: Vec<(Point, f64)>) -> Result<Self> {
        for (p, m) in &atoms {
            if m.is_nan() || !m.is_finite() {
                return invalid(format!("mass at {p} is not finite"));
            }
            if *m < 0.0 {
                return Err(HkError::NegativeMass(*m));
            }
            space.validate(p)?;
        }
        let atoms = merge_atoms(&space, atoms.into_iter().filter(|(_, m)| *m > 0.0).collect());
        Ok(DiscreteMeasure { space, atoms })
    }

    pub fn null(space: GroundSpace) -> Self {
        DiscreteMeasure { space, atoms: Vec::new() }
    }

    pub fn dirac(space: GroundSpace, point: Point, mass: f64) -> Result<Self> {
        Self::new(space, vec![(point, mass)])
    }

    pub fn space(&self) -> &GroundSpace {
        &self.space
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn is_null(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    pub fn points(&self) -> Vec<Point> {
        self.atoms.iter().map(|a| a.point.clone()).collect()
    }

    pub fn masses(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.mass).collect()
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s >= 0.0) || !s.is_finite() {
            return invalid(format!("scale factor must be finite and nonnegative, got {s}"));
        }
        Ok(self.map_masses(|m| m * s))
    }

    pub(crate) fn map_masses(&self, f: impl Fn(f64) -> f64) -> Self {
        DiscreteMeasure {
            space: self.space.clone(),
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom { point: a.point.clone(), mass: f(a.mass) })
                .filter(|a| a.mass > 0.0)
                .collect(),
        }
    }

    /// Sum of two measures on the same space.
    pub fn add(&self, other: &DiscreteMeasure) -> Result<Self> {
        if self.space != other.space {
            return Err(HkError::SpaceMismatch);
        }
        let atoms = self
            .atoms
            .iter()
            .chain(&other.atoms)
            .map(|a| (a.point.clone(), a.mass))
            .collect();
        Self::new(self.space.clone(), atoms)
    }

    /// Restriction to the atoms satisfying `keep`.
    pub fn restrict(&self, keep: impl Fn(&Point) -> bool) -> Self {
        DiscreteMeasure {
            space: self.space.clone(),
            atoms: self.atoms.iter().filter(|a| keep(&a.point)).cloned().collect(),
        }
    }

    /// `∫ f dμ`.
    pub fn integrate(&self, f: impl Fn(&Point) -> f64) -> f64 {
        self.atoms.iter().map(|a| a.mass * f(&a.point)).sum()
    }
}

fn merge_atoms(space: &GroundSpace, atoms: Vec<(Point, f64)>) -> Vec<Atom> {
    if atoms.len() < 2 {
        return atoms.into_iter().map(|(point, mass)| Atom { point, mass }).collect();
    }
    match space {
        GroundSpace::Finite(_) => {
            let mut out: Vec<Atom> = Vec::new();
            let mut slot = std::collections::HashMap::new();
            for (p, m) in atoms {
                let i = p.index().unwrap();
                match slot.get(&i) {
                    Some(&k) => {
                        let a: &mut Atom = &mut out[k];
                        a.mass += m;
                    }
                    None => {
                        slot.insert(i, out.len());
                        out.push(Atom { point: p, mass: m });
                    }
                }
            }
            out
        }
        _ => {
            // Sweep along the first coordinate; merge targets are the earliest atom.
            let key = |p: &Point| p.coords().unwrap()[0];
            let mut order: Vec<usize> = (0..atoms.len()).collect();
            order.sort_by(|&i, &j| key(&atoms[i].0).total_cmp(&key(&atoms[j].0)).then(i.cmp(&j)));
            let mut target: Vec<usize> = (0..atoms.len()).collect();
            for (pos, &i) in order.iter().enumerate() {
                let xi = key(&atoms[i].0);
                let mut back = pos;
                while back > 0 {
                    back -= 1;
                    let j = order[back];
                    if xi - key(&atoms[j].0) > MERGE_TOL {
                        break;
                    }
                    if space.dist(&atoms[i].0, &atoms[j].0) <= MERGE_TOL {
                        let root = target[j];
                        if root < target[i] {
                            target[i] = root;
                        }
                    }
                }
            }
            let mut out: Vec<Atom> = Vec::new();
            let mut index_of = vec![usize::MAX; atoms.len()];
            let mut masses: Vec<f64> = atoms.iter().map(|a| a.1).collect();
            for i in 0..atoms.len() {
                let t = target[i];
                if t != i {
                    masses[t] += masses[i];
                    masses[i] = 0.0;
                }
            }
            for (i, (p, _)) in atoms.into_iter().enumerate() {
                if target[i] == i {
                    index_of[i] = out.len();
                    out.push(Atom { point: p, mass: masses[i] });
                }
            }
            out
        }
    }
}

/// One atom of a measure on `C^p`: a tuple of cone points carrying `mass`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeAtom {
    pub points: Vec<ConePoint>,
    pub mass: f64,
}

/// A finitely supported measure on the `p`-fold power of the cone.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeMeasure {
    space: GroundSpace,
    arity: usize,
    atoms: Vec<ConeAtom>,
}

impl ConeMeasure {
    pub fn new(space: GroundSpace, arity: usize, atoms: Vec<ConeAtom>) -> Result<Self> {
        if arity == 0 {
            return invalid("cone measure arity must be positive");
        }
        for a in &atoms {
            if a.points.len() != arity {
                return Err(HkError::DimensionMismatch { expected: arity, found: a.points.len() });
            }
            if !(a.mass >= 0.0) || !a.mass.is_finite() {
                return Err(HkError::NegativeMass(a.mass));
            }
            for c in &a.points {
                space.validate(&c.base)?;
            }
        }
        let atoms = atoms.into_iter().filter(|a| a.mass > 0.0).collect();
        Ok(ConeMeasure { space, arity, atoms })
    }

    pub fn space(&self) -> &GroundSpace {
        &self.space
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn atoms(&self) -> &[ConeAtom] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    /// `Σ mass · Σ_i r_i²`.
    pub fn second_moment(&self) -> f64 {
        self.atoms
            .iter()
            .map(|a| a.mass * a.points.iter().map(|c| c.radius * c.radius).sum::<f64>())
            .sum()
    }

    pub fn max_radius(&self) -> f64 {
        self.atoms
            .iter()
            .flat_map(|a| a.points.iter().map(|c| c.radius))
            .fold(0.0, f64::max)
    }

    /// `h²_slot(α) = (x_slot)_# (r_slot² α)`; `slot` is zero-based.
    pub fn homogeneous_marginal(&self, slot: usize) -> Result<DiscreteMeasure> {
        if slot >= self.arity {
            return Err(HkError::IndexOutOfRange { index: slot, size: self.arity });
        }
        let atoms = self
            .atoms
            .iter()
            .filter(|a| !a.points[slot].is_apex())
            .map(|a| {
                let c = &a.points[slot];
                (c.base.clone(), a.mass * c.radius * c.radius)
            })
            .collect();
        DiscreteMeasure::new(self.space.clone(), atoms)
    }

    /// Dilation: every radius of atom `k` is divided by `theta[k]` and its
    /// mass multiplied by `theta[k]²`.
    pub fn dilate(&self, theta: &[f64]) -> Result<Self> {
        if theta.len() != self.atoms.len() {
            return Err(HkError::DimensionMismatch { expected: self.atoms.len(), found: theta.len() });
        }
        if let Some(t) = theta.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
            return invalid(format!("dilation factor must be positive, got {t}"));
        }
        let atoms = self
            .atoms
            .iter()
            .zip(theta)
            .map(|(a, &t)| ConeAtom {
                points: a
                    .points
                    .iter()
                    .map(|c| ConePoint { base: c.base.clone(), radius: c.radius / t })
                    .collect(),
                mass: a.mass * t * t,
            })
            .collect();
        Ok(ConeMeasure { space: self.space.clone(), arity: self.arity, atoms })
    }

    /// Dilates atoms with radii above `xi` so that every radius is at most `xi`.
    pub fn normalize_to_ball(&self, xi: f64) -> Result<Self> {
        if !(xi > 0.0) {
            return invalid(format!("ball radius must be positive, got {xi}"));
        }
        let theta: Vec<f64> = self
            .atoms
            .iter()
            .map(|a| {
                let r = a.points.iter().map(|c| c.radius).fold(0.0, f64::max);
                (r / xi).max(1.0)
            })
            .collect();
        self.dilate(&theta)
    }
}

/// Canonical lift `m δ_x ↦ (m / r²) δ_{[x, r]}`, a right inverse of `h²`.
pub fn lift_to_cone(mu: &DiscreteMeasure, radius: f64) -> Result<ConeMeasure> {
    if !(radius > 0.0) || !radius.is_finite() {
        return invalid(format!("lift radius must be positive, got {radius}"));
    }
    let atoms = mu
        .atoms()
        .iter()
        .map(|a| ConeAtom {
            points: vec![ConePoint { base: a.point.clone(), radius }],
            mass: a.mass / (radius * radius),
        })
        .collect();
    ConeMeasure::new(mu.space().clone(), 1, atoms)
}
