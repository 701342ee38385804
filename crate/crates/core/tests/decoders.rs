mod support;

use polarflip::code::ConstructionMethod;
use polarflip::sim::{frame_rng, make_frame, noise_sigma};
use polarflip::{
    decode, sc_decode, scl_decode, CheckKernel, Crc, DecoderConfig, FlipSpec, PolarCode,
};

fn ml_fixture(k: usize, crc_width: u8, crc_poly: u32) -> PolarCode {
    let crc = Crc::new(crc_width, crc_poly).unwrap();
    PolarCode::construct(16, k, crc, &ConstructionMethod::GaussianApproximation, 1.0).unwrap()
}

#[test]
fn list_of_one_is_sc() {
    let code = PolarCode::ga(64, 32, 2.0).unwrap();
    let sigma = noise_sigma(&code, 1.0);
    for id in 0..500 {
        let f = make_frame(&code, sigma, id, &mut frame_rng(1, 1.0, id));
        let sc = sc_decode(&code, &f.llrs, &FlipSpec::none(), CheckKernel::Exact).unwrap();
        let scl = scl_decode(&code, &f.llrs, &DecoderConfig::scl(1), &FlipSpec::none()).unwrap();
        assert_eq!(sc.decisions(), scl.decisions(), "frame {id}");
        assert_eq!(
            sc.chosen_path().path_metric.to_bits(),
            scl.chosen_path().path_metric.to_bits(),
            "frame {id}"
        );
    }
}

#[test]
fn flips_agree_between_sc_and_list_of_one() {
    let code = PolarCode::ga(64, 32, 2.0).unwrap();
    let sigma = noise_sigma(&code, 1.0);
    let free = code.free_positions();
    for id in 0..200 {
        let f = make_frame(&code, sigma, id, &mut frame_rng(2, 1.0, id));
        let flips = FlipSpec::new(vec![
            free[id as usize % free.len()],
            free[(id as usize * 7 + 3) % free.len()],
        ]);
        let flips = if flips.positions()[0] == flips.positions()[1] {
            FlipSpec::new(vec![flips.positions()[0]])
        } else {
            flips
        };
        let sc = sc_decode(&code, &f.llrs, &flips, CheckKernel::Exact).unwrap();
        let scl = scl_decode(&code, &f.llrs, &DecoderConfig::scl(1), &flips).unwrap();
        assert_eq!(sc.decisions(), scl.decisions(), "frame {id}");
    }
}

#[test]
fn full_list_is_maximum_likelihood() {
    let code = ml_fixture(4, 4, 0x3);
    let sigma = noise_sigma(&code, 0.0);
    let full = 1 << (code.k_info() + code.crc_len());
    for id in 0..200 {
        let f = make_frame(&code, sigma, id, &mut frame_rng(3, 0.0, id));
        let st = decode(&code, &f.llrs, &DecoderConfig::scl(full), &FlipSpec::none()).unwrap();
        assert!(
            st.passed_crc(),
            "some codeword always passes with a full list"
        );
        let got = code.encode(st.decisions()).unwrap().0;
        assert_eq!(got, support::ml_codeword(&code, &f.llrs), "frame {id}");
    }
}

#[test]
fn list_survivors_are_sorted_and_gradients_sum() {
    let code = PolarCode::ga(128, 64, 2.0).unwrap();
    let sigma = noise_sigma(&code, 1.5);
    for id in 0..50 {
        let f = make_frame(&code, sigma, id, &mut frame_rng(4, 1.5, id));
        let st = decode(&code, &f.llrs, &DecoderConfig::scl(8), &FlipSpec::none()).unwrap();
        assert_eq!(st.paths.len(), 8);
        for w in st.paths.windows(2) {
            assert!(w[0].path_metric <= w[1].path_metric);
        }
        for p in &st.paths {
            let s: f64 = p.gradient.iter().sum();
            assert!((s - p.path_metric).abs() <= 1e-9 * p.path_metric.max(1.0));
        }
    }
}

#[test]
fn larger_lists_do_not_lose_frames_on_average() {
    let code = PolarCode::ga(128, 64, 2.0).unwrap();
    let sigma = noise_sigma(&code, 1.0);
    let mut errors = [0; 3];
    for id in 0..600 {
        let f = make_frame(&code, sigma, id, &mut frame_rng(5, 1.0, id));
        for (slot, l) in [1, 4, 16].into_iter().enumerate() {
            let st = decode(&code, &f.llrs, &DecoderConfig::scl(l), &FlipSpec::none()).unwrap();
            errors[slot] += (code.message(st.decisions()) != f.message) as usize;
        }
    }
    assert!(
        errors[0] > errors[1] && errors[1] >= errors[2],
        "{errors:?}"
    );
}
