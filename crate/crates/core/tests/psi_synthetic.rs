use psiconn::rng::{self, Rng};
use psiconn::spectral::{pair_psi, quantile, surrogate_null, BandSpec, SpectralConfig};
use psiconn::synth::{coupled_pair, CouplingSpec};
use rand::SeedableRng;

fn pair_index(delay_ms: f64, seed: u64) -> f64 {
    let p = coupled_pair(&CouplingSpec::theta(delay_ms), &mut Rng::seed_from_u64(seed)).unwrap();
    let s = p.record.samples();
    let x: Vec<f64> = s.column(0).to_vec();
    let y: Vec<f64> = s.column(1).to_vec();
    pair_psi(&x, &y, &SpectralConfig::new(1000.0), &BandSpec::theta()).unwrap()
}

#[test]
fn delay_sign_is_recovered() {
    let mut pos = 0;
    let mut flipped = 0;
    for seed in 0..200 {
        let a = pair_index(20.0, seed);
        let b = pair_index(-20.0, seed);
        pos += (a > 0.0) as usize;
        flipped += (b < 0.0) as usize;
    }
    assert!(pos >= 198, "{pos}/200 positive at +20 ms");
    assert!(flipped >= 198, "{flipped}/200 negative at -20 ms");
}

#[test]
fn zero_delay_stays_under_surrogate_threshold() {
    let config = SpectralConfig::new(1000.0);
    let band = BandSpec::theta();
    let mut under = 0;
    let n = 50;
    for seed in 0..n {
        let p = coupled_pair(&CouplingSpec::theta(0.0), &mut Rng::seed_from_u64(seed)).unwrap();
        let s = p.record.samples();
        let x: Vec<f64> = s.column(0).to_vec();
        let y: Vec<f64> = s.column(1).to_vec();
        let obs = pair_psi(&x, &y, &config, &band).unwrap().abs();
        let mut r = rng::stream(seed, "surrogate", &[]);
        let null = surrogate_null(&x, &y, &config, &band, 100, 10, &mut r).unwrap();
        under += (obs < quantile(&null, 0.95)) as usize;
    }
    assert!(under * 10 >= n as usize * 9, "{under}/{n}");
}
