use sewave::equivariance::{downsample2, upsample2, verify_corollary1_with, verify_prop1_with, StackCheck};

#[test]
fn single_convolution_identity_holds_exactly() {
    for (k, c, d) in [(2, 1, 1), (3, 4, 2), (5, 3, 4), (3, 8, 8)] {
        let r = verify_prop1_with(k, c, 128, d, 10, k as u64, false).unwrap();
        assert_eq!(r.max_abs_residual, 0.0, "k={k} C={c} d={d}");
        let u = verify_prop1_with(k, c, 128, d, 10, k as u64, true).unwrap();
        assert!(u.median_residual() > 1e-2);
    }
}

#[test]
fn boundary_effect_stays_inside_receptive_field() {
    for depth in 1..=4 {
        let check = StackCheck {
            depth,
            kernel_size: 3,
            channels: 4,
            half_len: 256,
            trim: (3 - 1) << depth,
            weight_scale: 0.5,
        };
        let r = verify_corollary1_with(check, 5, depth as u64, false).unwrap();
        assert!(r.max_abs_residual <= 1e-12);
        assert!(r.boundary_nonzero_len <= check.required_trim(), "depth {depth}: {}", r.boundary_nonzero_len);
    }
}

#[test]
fn trim_below_receptive_field_is_rejected() {
    let check = StackCheck {
        trim: 15,
        ..StackCheck::default()
    };
    let err = verify_corollary1_with(check, 1, 0, false).unwrap_err();
    assert!(err.to_string().contains("16"));
}

#[test]
fn resampling_round_trip() {
    let x: Vec<f64> = (0..10).map(f64::from).collect();
    let d = downsample2(&x).unwrap();
    assert_eq!(d, vec![0.0, 2.0, 4.0, 6.0, 8.0]);
    assert_eq!(downsample2(&upsample2(&d)).unwrap(), d);
    assert!(downsample2(&x[..9]).is_err());
}
