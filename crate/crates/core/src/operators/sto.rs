use super::coupling::{CouplingSpec, CouplingTable};
use super::drive::{drive_field, DriveField};
use super::maps::MapSpec;
use super::noise::NoiseKernel;
use crate::error::{Result, StoError};
use crate::torus::{periodic_derivative, GridDensity, GridFn, Interpolant, Interpolation};

/// The self-consistent operator `𝒯 = P ∘ 𝓛`, `𝓛φ = L_φ φ`, on one grid.
#[derive(Clone, Debug)]
pub struct StoModel {
    map: MapSpec,
    table: CouplingTable,
    delta: f64,
    interp: Interpolation,
}

impl StoModel {
    pub fn new(map: MapSpec, coupling: CouplingSpec, delta: f64, grid_size: usize) -> Result<Self> {
        Ok(StoModel {
            map,
            table: CouplingTable::new(coupling, grid_size)?,
            delta,
            interp: Interpolation::default(),
        })
    }

    pub fn with_interpolation(mut self, interp: Interpolation) -> Self {
        self.interp = interp;
        self
    }

    /// Same map, coupling and grid at another coupling strength.
    pub fn with_delta(&self, delta: f64) -> Self {
        StoModel {
            delta,
            ..self.clone()
        }
    }

    pub fn map(&self) -> MapSpec {
        self.map
    }

    pub fn coupling(&self) -> CouplingSpec {
        self.table.spec()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn grid_size(&self) -> usize {
        self.table.grid_size()
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interp
    }

    fn check_grid(&self, f: &GridFn) -> Result<()> {
        if f.grid_size() != self.grid_size() {
            return Err(StoError::Domain(format!(
                "grid size {} does not match model grid {}",
                f.grid_size(),
                self.grid_size()
            )));
        }
        Ok(())
    }

    pub fn drive_field(&self, phi: &GridDensity) -> Result<DriveField> {
        self.check_grid(phi.as_fn())?;
        drive_field(phi, &self.table, self.delta, self.interp)
    }

    /// `Pψ`, linear in `ψ`.
    pub fn apply_p_fn(&self, psi: &GridFn) -> GridFn {
        self.map.apply_p(psi, self.interp)
    }

    pub fn apply_p(&self, psi: &GridDensity) -> Result<GridDensity> {
        self.check_grid(psi.as_fn())?;
        GridDensity::new(self.apply_p_fn(psi.as_fn()))
    }

    /// `L_φψ = (ψ/g′) ∘ g⁻¹` at the nodes, for a signed `ψ`.
    pub fn apply_l_fn(&self, drive: &DriveField, psi: &GridFn) -> Result<GridFn> {
        self.check_grid(psi)?;
        if drive.is_identity() {
            return Ok(psi.clone());
        }
        let ip = Interpolant::new(psi, self.interp);
        let values = psi
            .nodes()
            .map(|x| {
                let y = drive.g_inverse(x)?;
                Ok(ip.eval(y) / drive.g_prime(y))
            })
            .collect::<Result<Vec<f64>>>()?;
        GridFn::new(values)
    }

    pub fn apply_l(&self, drive: &DriveField, psi: &GridDensity) -> Result<GridDensity> {
        GridDensity::new(self.apply_l_fn(drive, psi.as_fn())?)
    }

    /// `𝒯φ = P L_φ φ`; homogeneous of degree one.
    pub fn apply_sto(&self, phi: &GridDensity) -> Result<GridDensity> {
        let drive = self.drive_field(phi)?;
        let pushed = self.apply_l_fn(&drive, phi.as_fn())?;
        GridDensity::new(self.apply_p_fn(&pushed))
    }

    /// `M𝒯φ`.
    pub fn apply_noisy_sto(&self, phi: &GridDensity, kernel: &NoiseKernel) -> Result<GridDensity> {
        kernel.apply_m(&self.apply_sto(phi)?)
    }

    /// `Dg_φ(ψ) = δ/∫φ ∫H(·, y)[ψ − φ∫ψ/∫φ](y)dy`.
    pub fn dg_direction(&self, phi: &GridDensity, psi: &GridFn) -> Result<GridFn> {
        self.check_grid(psi)?;
        self.check_grid(phi.as_fn())?;
        let m_phi = phi.integral();
        let ratio = psi.integral() / m_phi;
        let w = psi.zip_with(phi.as_fn(), |s, f| s - f * ratio);
        Ok(self.table.integrate(0, &w).scale(self.delta / m_phi))
    }

    /// `D𝒯_φ(ψ) = P[L_φψ − (L_φ[φ Dg_φ(ψ)])′]`, for a signed direction `ψ`.
    pub fn sto_differential(&self, phi: &GridDensity, psi: &GridFn) -> Result<GridFn> {
        let drive = self.drive_field(phi)?;
        let v = self.dg_direction(phi, psi)?;
        let pushed = self.apply_l_fn(&drive, psi)?;
        let flux = self.apply_l_fn(&drive, &(phi.as_fn() * &v))?;
        let inner = &pushed - &periodic_derivative(&flux, 1);
        Ok(self.apply_p_fn(&inner))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const G: usize = 256;

    fn model(delta: f64) -> StoModel {
        StoModel::new(MapSpec::linear(5).unwrap(), CouplingSpec::SinCos, delta, G).unwrap()
    }

    fn bumpy() -> GridDensity {
        GridDensity::from_fn(G, |x| {
            (0.3 * (2.0 * PI * x).cos() + 0.1 * (4.0 * PI * x).sin() - 0.05 * (10.0 * PI * x).cos())
                .exp()
        })
        .unwrap()
    }

    #[test]
    fn lebesgue_is_invariant() {
        let one = GridDensity::uniform(G).unwrap();
        for delta in [-0.25, -0.155, 0.1, 0.3] {
            let out = model(delta).apply_sto(&one).unwrap();
            assert!(out.as_fn().dist_sup(one.as_fn()) < 1e-8);
        }
    }

    #[test]
    fn uncoupled_limit_is_p() {
        let m = model(0.0);
        let phi = bumpy();
        assert_eq!(m.apply_sto(&phi).unwrap(), m.apply_p(&phi).unwrap());
    }

    #[test]
    fn homogeneous_of_degree_one() {
        let m = model(0.2);
        let phi = GridDensity::from_fn(G, |x| 1.0 + 0.3 * (2.0 * PI * x).cos()).unwrap();
        let a = m.apply_sto(&phi).unwrap();
        let b = m.apply_sto(&phi.scale(2.0).unwrap()).unwrap();
        assert!(b.as_fn().dist_sup(&a.as_fn().scale(2.0)) < 1e-10);
    }

    #[test]
    fn apply_l_examples() {
        let m = model(0.1);
        let one = GridDensity::uniform(G).unwrap();
        let phi = bumpy();
        let id = DriveField::identity(G, Interpolation::default()).unwrap();
        assert!(m.apply_l(&id, &phi).unwrap().as_fn().dist_sup(phi.as_fn()) < 1e-15);

        let d = m.drive_field(&phi).unwrap();
        let out = m.apply_l(&d, &one).unwrap();
        assert!((out.integral() - 1.0).abs() < 1e-9);
        assert!((m.apply_l(&d, &phi).unwrap().integral() - phi.integral()).abs() < 1e-9);

        // c = sin(2πx) exactly: φ = 1 + 2cos gives ∫cos·φ = 1 (not positive, so use a weight)
        let w = GridFn::from_fn(G, |y| 1.0 + 2.0 * (2.0 * PI * y).cos()).unwrap();
        let table = CouplingTable::new(CouplingSpec::SinCos, G).unwrap();
        let small = 1e-3;
        let d = DriveField::from_weight(&w, &table, small, Interpolation::default()).unwrap();
        let out = m.apply_l(&d, &one).unwrap();
        let first_order = GridFn::from_fn(G, |x| 1.0 - small * 2.0 * PI * (2.0 * PI * x).cos()).unwrap();
        assert!(out.as_fn().dist_sup(&first_order) < 1e-4);
    }

    #[test]
    fn dg_direction_examples() {
        let m = model(0.1);
        let phi = bumpy();
        assert!(m.dg_direction(&phi, phi.as_fn()).unwrap().sup_norm() < 1e-15);
        assert!(m.dg_direction(&phi, &phi.as_fn().scale(3.7)).unwrap().sup_norm() < 1e-14);
        let one = GridDensity::uniform(G).unwrap();
        let psi = GridFn::from_fn(G, |y| 1.0 + (2.0 * PI * y).cos()).unwrap();
        let v = m.dg_direction(&one, &psi).unwrap();
        let expect = GridFn::from_fn(G, |x| 0.05 * (2.0 * PI * x).sin()).unwrap();
        assert!(v.dist_sup(&expect) < 1e-15);
    }

    #[test]
    fn differential_examples() {
        let phi = bumpy();
        let psi = GridFn::from_fn(G, |x| 1.0 + 0.4 * (2.0 * PI * x).sin() + 0.2 * (6.0 * PI * x).cos())
            .unwrap();
        let m0 = model(0.0);
        let d0 = m0.sto_differential(&phi, &psi).unwrap();
        assert!(d0.dist_sup(&m0.apply_p_fn(&psi)) < 1e-15);

        let m = model(0.2);
        let euler = m.sto_differential(&phi, phi.as_fn()).unwrap();
        assert!(euler.dist_sup(m.apply_sto(&phi).unwrap().as_fn()) < 1e-12);
    }

    #[test]
    fn differential_matches_central_differences() {
        let m = model(0.2);
        let phi = bumpy();
        let psi = GridFn::from_fn(G, |x| 0.5 * (2.0 * PI * x).cos() + 0.3 * (4.0 * PI * x).sin()).unwrap();
        let d = m.sto_differential(&phi, &psi).unwrap();
        let err = |h: f64| {
            let plus = GridDensity::new(phi.as_fn() + &psi.scale(h)).unwrap();
            let minus = GridDensity::new(phi.as_fn() - &psi.scale(h)).unwrap();
            let fd = (m.apply_sto(&plus).unwrap().as_fn() - m.apply_sto(&minus).unwrap().as_fn())
                .scale(0.5 / h);
            fd.dist_sup(&d)
        };
        let (e3, e4) = (err(1e-3), err(1e-4));
        let order = (e3 / e4).log10();
        assert!(order >= 1.9, "errors {e3:e} {e4:e}, order {order}");
    }

    #[test]
    fn operators_preserve_mass_and_positivity() {
        let phi = bumpy();
        for delta in [-0.2, 0.0, 0.25] {
            let m = model(delta);
            let t = m.apply_sto(&phi).unwrap();
            assert!((t.integral() - phi.integral()).abs() < 1e-8);
            assert!(t.as_fn().min() > 0.0);
            let p = m.apply_p(&phi).unwrap();
            assert!((p.integral() - phi.integral()).abs() < 1e-12);
        }
    }
}
