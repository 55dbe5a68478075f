use propgen::cvae::{self, CvaeHyper, CvaeModel};
use propgen::datagen::{self, Dataset};
use propgen::ldm::{self, DiffusionHyper, LdmModel, Prediction, VaeHyper};
use propgen::surrogate::{self, SurrogateHyper, SurrogateModel};

fn tiny_dataset() -> Dataset {
    datagen::generate_dataset(40, 5).unwrap()
}

const COND: [f64; 5] = [0.6, 0.25, 0.55, 1.5, 4.0];

#[test]
fn cvae_train_generate_roundtrip() {
    let ds = tiny_dataset();
    let m = cvae::train_cvae(&ds, &CvaeHyper { epochs: 2, batch: 64, seed: 3, ..Default::default() }).unwrap();
    assert_eq!(m.report.val.len(), 2);
    for p in &m.report.val {
        assert!(p.kl >= 0.0 && p.recon >= 0.0);
    }
    let a = m.generate(&COND, 6, 9).unwrap();
    let b = m.generate(&COND, 6, 9).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, m.generate(&COND, 6, 10).unwrap());
    for g in &a {
        assert_eq!(g.physical, g.design.is_physical());
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cvae.bin");
    m.save(&path).unwrap();
    let back = CvaeModel::load(&path).unwrap();
    assert!(back == m, "artifact did not round-trip exactly");
    assert!(LdmModel::load(&path).is_err());
}

#[test]
fn cvae_training_is_seed_deterministic() {
    let ds = tiny_dataset();
    let h = CvaeHyper { epochs: 1, batch: 64, seed: 1, ..Default::default() };
    assert_eq!(cvae::train_cvae(&ds, &h).unwrap(), cvae::train_cvae(&ds, &h).unwrap());
}

#[test]
fn ldm_train_generate_roundtrip() {
    let ds = tiny_dataset();
    let vae = ldm::train_latent_vae(&ds, &VaeHyper { epochs: 2, seed: 2, ..Default::default() }).unwrap();
    assert!(vae.report.val_recon_mse > 0.0 && vae.report.val_kl >= 0.0);
    for mode in [Prediction::Epsilon, Prediction::Velocity] {
        let h = DiffusionHyper { mode, steps: 10, epochs: 2, seed: 2, ..Default::default() };
        let m = ldm::train_diffusion(&ds, Some(vae.clone()), &h).unwrap();
        let a = m.generate(&COND, 4, 1).unwrap();
        assert_eq!(a.len(), 4);
        assert_eq!(a, m.generate(&COND, 4, 1).unwrap());
        // chains do not depend on how many are drawn
        assert_eq!(a[..2], m.generate(&COND, 2, 1).unwrap()[..]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ldm.bin");
        m.save(&path).unwrap();
        let back = LdmModel::load(&path).unwrap();
        assert_eq!(back.generate(&COND, 4, 1).unwrap(), a);
        assert!(CvaeModel::load(&path).is_err());
    }
}

#[test]
fn design_space_diffusion_needs_no_vae() {
    let ds = tiny_dataset();
    let h = DiffusionHyper { steps: 8, epochs: 1, design_space: true, ..Default::default() };
    let m = ldm::train_diffusion(&ds, None, &h).unwrap();
    assert!(m.vae.is_none());
    assert_eq!(m.generate(&COND, 3, 0).unwrap().len(), 3);
    let latent = DiffusionHyper { design_space: false, ..h };
    assert!(ldm::train_diffusion(&ds, None, &latent).is_err());
}

#[test]
fn surrogate_roundtrip_and_batch_prediction() {
    let ds = tiny_dataset();
    let m = surrogate::train_surrogate(&ds, &SurrogateHyper { epochs: 2, seed: 4, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.bin");
    m.save(&path).unwrap();
    let back = SurrogateModel::load(&path).unwrap();
    let spec = &ds.designs[0];
    assert_eq!(back.predict(spec, 0.6), m.predict(spec, 0.6));
    let inputs: Vec<Vec<f64>> =
        (0..5).map(|i| datagen::surrogate_input(&spec.design, spec.diameter_m, spec.blades, 0.1 * i as f64)).collect();
    let batch = m.predict_inputs(&inputs).unwrap();
    for (i, p) in batch.iter().enumerate() {
        let one = m.predict(spec, 0.1 * i as f64);
        for k in 0..3 {
            assert!((p[k] - one[k]).abs() < 1e-12);
        }
    }
}
