use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Structure constants `c[d][a][b] = c^d_{ab}`, `[e_a, e_b] = sum_d c^d_{ab} e_d`.
pub type Constants = [[[C64; 3]; 3]; 3];

/// Tolerance for the Jacobi identity and unimodularity checks.
pub const ALGEBRA_TOL: f64 = 1e-12;

/// The four unimodular three-dimensional complex Lie groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Abelian,
    /// Heisenberg group.
    Nilpotent,
    /// Rigid motions of the plane.
    Solvable,
    Sl2c,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::Abelian, Group::Nilpotent, Group::Solvable, Group::Sl2c];

    pub fn name(self) -> &'static str {
        match self {
            Group::Abelian => "abelian",
            Group::Nilpotent => "nilpotent",
            Group::Solvable => "solvable",
            Group::Sl2c => "sl2c",
        }
    }
}

impl std::str::FromStr for Group {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        Group::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| CoreError::Contract(format!("unknown group '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LieAlgebra {
    c: Constants,
    group: Option<Group>,
}

fn set(c: &mut Constants, d: usize, a: usize, b: usize, v: f64) {
    c[d][a][b] = C64::new(v, 0.0);
    c[d][b][a] = C64::new(-v, 0.0);
}

impl LieAlgebra {
    /// Standard bases: Heisenberg `c^3_{12} = 1`; rigid motions in the basis
    /// diagonalizing `ad e_3`, `c^1_{31} = 1`, `c^2_{32} = -1`; `sl(2,C)` with
    /// cyclic `c^3_{12} = c^1_{23} = c^2_{31} = 1`.
    pub fn standard(group: Group) -> Self {
        let mut c = [[[C64::default(); 3]; 3]; 3];
        match group {
            Group::Abelian => {}
            Group::Nilpotent => set(&mut c, 2, 0, 1, 1.0),
            Group::Solvable => {
                set(&mut c, 0, 2, 0, 1.0);
                set(&mut c, 1, 2, 1, -1.0);
            }
            Group::Sl2c => {
                set(&mut c, 2, 0, 1, 1.0);
                set(&mut c, 0, 1, 2, 1.0);
                set(&mut c, 1, 2, 0, 1.0);
            }
        }
        Self { c, group: Some(group) }
    }

    /// Rigid motions in the rotation basis `c^2_{31} = 1`, `c^1_{32} = -1`.
    pub fn rigid_motions_rotation_basis() -> Self {
        let mut c = [[[C64::default(); 3]; 3]; 3];
        set(&mut c, 1, 2, 0, 1.0);
        set(&mut c, 0, 2, 1, -1.0);
        Self {
            c,
            group: Some(Group::Solvable),
        }
    }

    /// Validated custom structure constants.
    pub fn from_constants(c: Constants) -> Result<Self> {
        let mut anti = 0.0_f64;
        for d in 0..3 {
            for a in 0..3 {
                for b in 0..3 {
                    anti = anti.max((c[d][a][b] + c[d][b][a]).norm());
                }
            }
        }
        if anti > 0.0 {
            return Err(CoreError::Contract("structure constants not antisymmetric".into()));
        }
        let alg = Self { c, group: None };
        let jac = alg.jacobi_defect();
        if jac > ALGEBRA_TOL {
            return Err(CoreError::Contract(format!("Jacobi identity fails by {jac:e}")));
        }
        let uni = alg.unimodular_defect();
        if uni > ALGEBRA_TOL {
            return Err(CoreError::Contract(format!("algebra not unimodular ({uni:e})")));
        }
        Ok(alg)
    }

    pub fn constants(&self) -> &Constants {
        &self.c
    }

    pub fn group(&self) -> Option<Group> {
        self.group
    }

    /// `max |[[e_a,e_b],e_c] + cyclic|`.
    pub fn jacobi_defect(&self) -> f64 {
        let c = &self.c;
        let mut worst = 0.0_f64;
        for a in 0..3 {
            for b in 0..3 {
                for e in 0..3 {
                    for f in 0..3 {
                        let mut s = C64::default();
                        for d in 0..3 {
                            s += c[d][a][b] * c[f][d][e] + c[d][b][e] * c[f][d][a] + c[d][e][a] * c[f][d][b];
                        }
                        worst = worst.max(s.norm());
                    }
                }
            }
        }
        worst
    }

    /// `max_b |sum_d c^d_{db}|`.
    pub fn unimodular_defect(&self) -> f64 {
        (0..3)
            .map(|b| (0..3).map(|d| self.c[d][d][b]).sum::<C64>().norm())
            .fold(0.0, f64::max)
    }
}

/// `tau = 2 kappa^2 (2 kappa - 1)` for the Gauduchon line parameter `kappa`.
pub fn tau(kappa: f64) -> f64 {
    2.0 * kappa * kappa * (2.0 * kappa - 1.0)
}

/// Connection on the Gauduchon line together with the string parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GauduchonParam {
    pub kappa: f64,
    pub alpha: f64,
}

impl GauduchonParam {
    pub fn new(kappa: f64, alpha: f64) -> Self {
        Self { kappa, alpha }
    }

    /// Chooses `alpha'` so that `alpha' tau` has the requested value.
    pub fn with_alpha_tau(kappa: f64, alpha_tau: f64) -> Result<Self> {
        let t = tau(kappa);
        if t == 0.0 {
            return Err(CoreError::Contract(format!("tau vanishes at kappa = {kappa}")));
        }
        Ok(Self {
            kappa,
            alpha: alpha_tau / t,
        })
    }

    pub fn tau(&self) -> f64 {
        tau(self.kappa)
    }

    pub fn alpha_tau(&self) -> f64 {
        self.alpha * self.tau()
    }

    /// The sign condition `alpha' tau > 0` required by the classification.
    pub fn is_admissible(&self) -> bool {
        self.alpha_tau() > 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_algebras_are_unimodular_lie_algebras() {
        for g in Group::ALL {
            let a = LieAlgebra::standard(g);
            assert!(a.jacobi_defect() < ALGEBRA_TOL, "{g:?}");
            assert_eq!(a.unimodular_defect(), 0.0);
            assert!(LieAlgebra::from_constants(*a.constants()).is_ok());
        }
        let r = LieAlgebra::rigid_motions_rotation_basis();
        assert!(r.jacobi_defect() < ALGEBRA_TOL);
    }

    #[test]
    fn non_unimodular_rejected() {
        let mut c = [[[C64::default(); 3]; 3]; 3];
        set(&mut c, 0, 0, 1, 1.0);
        assert!(LieAlgebra::from_constants(c).is_err());
    }

    #[test]
    fn tau_on_the_gauduchon_line() {
        assert_eq!(tau(0.0), 0.0);
        assert_eq!(tau(0.5), 0.0);
        assert_eq!(tau(1.0), 2.0);
    }
}
