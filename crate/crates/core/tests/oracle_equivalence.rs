use num_complex::Complex64;
use otfs_core::dd_channel::{assemble_g, AssembleOptions};
use otfs_core::dd_core::{ChannelPath, ChannelState, DdVector, FrameParams};
use otfs_core::waveform_oracle::oracle_end_to_end;

fn rel(a: &DdVector, b: &DdVector) -> f64 {
    let num: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).norm_sqr()).sum();
    (num / b.energy()).sqrt()
}

fn frame() -> FrameParams {
    let df = 15e3;
    FrameParams::new(16, 8, df, 4.0 / (16.0 * df), df / 8.0 * 2.0).unwrap()
}

fn mismatches(ch: &ChannelState, p: &FrameParams, x: &DdVector, qs: &[usize]) -> Vec<f64> {
    let want = assemble_g(ch, p, AssembleOptions::default()).unwrap().apply(x).unwrap();
    qs.iter().map(|&q| rel(&oracle_end_to_end(x, ch, p, q, None).unwrap(), &want)).collect()
}

fn pilot(p: &FrameParams) -> DdVector {
    let mut x = DdVector::zeros(p.m(), p.n());
    x[(8, 4)] = Complex64::new(1.0, 0.0);
    x
}

#[test]
fn single_fractional_path_map_matches_oracle() {
    let p = frame();
    let ch = ChannelState::single(Complex64::new(1.0, 0.0), 3.37 * p.delay_resolution(), 1.41 * p.doppler_resolution()).unwrap();
    let m = mismatches(&ch, &p, &pilot(&p), &[8, 16, 32, 64]);
    assert!(m.windows(2).all(|w| w[1] < w[0]), "{m:?}");
    assert!(m[3] < 0.05, "{m:?}");
}

#[test]
fn two_path_data_frame_matches_oracle() {
    let p = frame();
    let ch = ChannelState::new(vec![
        ChannelPath::new(Complex64::new(0.8, 0.1), 0.6 * p.delay_resolution(), -1.3 * p.doppler_resolution()),
        ChannelPath::new(Complex64::new(-0.2, 0.4), 2.5 * p.delay_resolution(), 0.7 * p.doppler_resolution()),
    ])
    .unwrap();
    let mut x = DdVector::zeros(p.m(), p.n());
    for (i, v) in x.as_mut_slice().iter_mut().enumerate() {
        let s = if i % 3 == 0 { -1.0 } else { 1.0 };
        *v = Complex64::new(s, if i % 2 == 0 { 1.0 } else { -1.0 }) / 2f64.sqrt();
    }
    let m = mismatches(&ch, &p, &x, &[8, 32]);
    assert!(m[1] < m[0], "{m:?}");
    assert!(m[1] < 0.05, "{m:?}");
}
