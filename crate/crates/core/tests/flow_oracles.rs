use multirate::flow::{check_loss_gradient, inverse_warp, occlusion_flags, warp_flow, CharbonnierParams, OcclusionParams};
use multirate::media::{FlowField, Frame};
use multirate::rng;
use multirate::synth::{random_scene, render_sequence, smooth_flow, value_noise, MotionConfig, SpeedProfile};
use rand::Rng;

#[test]
fn ground_truth_flows_are_consistent_off_the_occlusions() {
    for i in 0..10u64 {
        let mut r = rng::stream(21, &[i]);
        let profile = SpeedProfile::ALL[i as usize % SpeedProfile::ALL.len()];
        let spec = random_scene((40, 40), 8, profile, &MotionConfig::default(), &mut r).unwrap();
        let (_, gt) = render_sequence(&spec, 8).unwrap();
        for t in 0..7 {
            let (mf, mb) = (&gt.flows_fwd[t], &gt.flows_bwd[t]);
            let back = warp_flow(mb, mf).unwrap();
            for y in 0..40 {
                for x in 0..40 {
                    if !gt.occlusion_fwd[t].get(x, y) {
                        let (u, v) = mf.get(x, y);
                        let (bu, bv) = back.get(x, y);
                        assert_eq!((u + bu, v + bv), (0.0, 0.0), "scene {i} pair {t} at ({x}, {y})");
                    }
                }
            }
        }
    }
}

#[test]
fn occlusion_flags_recover_sprite_occlusions() {
    let params = OcclusionParams::new(0.01, 0.5).unwrap();
    for i in 0..20u64 {
        let mut r = rng::stream(22, &[i]);
        let profile = SpeedProfile::ALL[i as usize % SpeedProfile::ALL.len()];
        let spec = random_scene((48, 48), 6, profile, &MotionConfig::default(), &mut r).unwrap();
        let (_, gt) = render_sequence(&spec, 6).unwrap();
        for t in 0..5 {
            let (of, ob) = occlusion_flags(&gt.flows_fwd[t], &gt.flows_bwd[t], &params).unwrap();
            let f = of.iou(&gt.occlusion_fwd[t], 1).unwrap();
            let b = ob.iou(&gt.occlusion_bwd[t], 1).unwrap();
            assert!(f >= 0.9 && b >= 0.9, "scene {i} pair {t}: iou {f} / {b}");
        }
    }
}

#[test]
fn zero_warp_is_identity_and_integer_warp_is_a_shift() {
    let mut r = rng::stream(23, &[]);
    let frame = Frame::new(17, 23, 3, (0..17 * 23 * 3).map(|_| r.random::<f32>()).collect()).unwrap();
    let (same, valid) = inverse_warp(&frame, &FlowField::zeros(17, 23)).unwrap();
    assert_eq!(same, frame);
    assert_eq!(valid.count_ones(), 17 * 23);
    for (dx, dy) in [(2i64, 0i64), (-3, 1), (1, -4), (0, 0)] {
        let (out, valid) = inverse_warp(&frame, &FlowField::constant(17, 23, dx as f64, dy as f64)).unwrap();
        for y in 0..17i64 {
            for x in 0..23i64 {
                let (sx, sy) = (x + dx, y + dy);
                let inside = (0..23).contains(&sx) && (0..17).contains(&sy);
                assert_eq!(valid.get(x as usize, y as usize), inside);
                if inside {
                    for c in 0..3 {
                        assert_eq!(out.get(x as usize, y as usize, c), frame.get(sx as usize, sy as usize, c));
                    }
                }
            }
        }
    }
}

#[test]
fn loss_gradient_matches_finite_differences_on_smooth_scenes() {
    for i in 0..3u64 {
        let mut r = rng::stream(24, &[i]);
        let i1 = value_noise(32, 32, 5, (0.45, 0.95), &mut r).unwrap();
        let i2 = value_noise(32, 32, 5, (0.05, 0.55), &mut r).unwrap();
        let mf = smooth_flow(32, 32, 8, (-1.6, 1.6), &mut r);
        let mb = smooth_flow(32, 32, 8, (-1.6, 1.6), &mut r);
        let c = check_loss_gradient(&i1, &i2, &mf, &mb, &CharbonnierParams::default(), &OcclusionParams::default(), 1e-3, 1e-4)
            .unwrap();
        assert!(c.compared > 500, "scene {i}: {c:?}");
        assert!(c.pass_fraction() >= 0.99, "scene {i}: {c:?}");
    }
}
