use iab_core::antenna::{select_beam, total_gain_db, local_direction, UpaConfig};
use iab_core::channel::{
    classical_two_ray_pl, modified_two_ray_pl, rain_specific_attenuation, two_ray_pl_with_alpha, ChannelParams,
    Geometry, Polarization, RainCoefficientTable,
};
use iab_core::mac_scheduler::Numerology;
use iab_core::phy_link::{
    achievable_bits, aggregate_sinr, link_budget, Endpoint, InterferenceTerm, Propagation, RadioConfig, RateMap,
};
use iab_core::topology::NodeId;
use proptest::prelude::*;

fn prop(rho: f64) -> Propagation<f64> {
    let ch = ChannelParams { rain_rate_mmh: rho, ..Default::default() };
    Propagation::new(ch, &RainCoefficientTable::bundled()).unwrap()
}

fn pair(d: f64) -> (Endpoint<f64>, Endpoint<f64>) {
    let tx = Endpoint { node: NodeId(0), position: [0.0, 0.0, 20.0], panel: UpaConfig::default() };
    let rx = Endpoint { node: NodeId(1), position: [d, 0.0, 10.0], panel: UpaConfig::default().with_boresight(180.0, 0.0) };
    (tx, rx)
}

fn snr(d: f64, rho: f64) -> f64 {
    let (tx, rx) = pair(d);
    link_budget(0, &tx, &rx, &prop(rho), &RadioConfig::default(), 400e6).unwrap().snr_db
}

proptest! {
    #[test]
    fn pl_symmetric_in_heights(d in 1.0f64..5000.0, f in 6.0f64..80.0, h1 in 1.0f64..50.0, h2 in 1.0f64..50.0) {
        let p = ChannelParams { carrier_freq_ghz: f, ..Default::default() };
        let a = modified_two_ray_pl(&Geometry::new(d, h1, h2).unwrap(), &p).unwrap().db;
        let b = modified_two_ray_pl(&Geometry::new(d, h2, h1).unwrap(), &p).unwrap().db;
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn classical_is_unit_alpha(d in 1.0f64..5000.0, f in 6.0f64..80.0) {
        let p = ChannelParams { carrier_freq_ghz: f, ..Default::default() };
        let g = Geometry::new(d, 10.0, 10.0).unwrap();
        prop_assert_eq!(classical_two_ray_pl(&g, &p).unwrap(), two_ray_pl_with_alpha(&g, &p, 1.0).unwrap());
    }

    #[test]
    fn rain_increases_with_rate(f in 2.0f64..100.0, r in 0.0f64..100.0, dr in 0.01f64..50.0) {
        let table = RainCoefficientTable::bundled();
        for pol in [Polarization::Horizontal, Polarization::Vertical] {
            let g = |rho: f64| {
                let p = ChannelParams { carrier_freq_ghz: f, rain_rate_mmh: rho, polarization: pol, ..Default::default() };
                rain_specific_attenuation(&p, &table).unwrap()
            };
            prop_assert!(g(r + dr) > g(r));
        }
    }

    #[test]
    fn rain_drop_is_gamma_times_length(d in 100.0f64..4000.0, rho in 0.1f64..50.0) {
        let pr = prop(rho);
        let (tx, rx) = pair(d);
        let s = link_budget(0, &tx, &rx, &pr, &RadioConfig::default(), 400e6).unwrap();
        let drop = snr(d, 0.0) - s.snr_db;
        prop_assert!(drop > 0.0);
        prop_assert!((drop - pr.gamma_db_per_km * s.distance_m / 1000.0).abs() < 1e-9);
    }

    #[test]
    fn longer_links_lose_more_to_rain(d1 in 100.0f64..3000.0, extra in 10.0f64..1000.0, rho in 0.5f64..50.0) {
        let d2 = d1 + extra;
        prop_assert!(snr(d2, rho) - snr(d2, 0.0) < snr(d1, rho) - snr(d1, 0.0));
    }

    #[test]
    fn splitting_an_interferer_keeps_sinr(p_int in -120.0f64..-40.0, overlap in 0.01f64..1.0, d in 200.0f64..3000.0) {
        let (tx, rx) = pair(d);
        let s = link_budget(0, &tx, &rx, &prop(0.0), &RadioConfig::default(), 400e6).unwrap();
        let one = aggregate_sinr(&s, &[InterferenceTerm { tx_node: NodeId(5), power_dbm: p_int, overlap }]);
        let half = p_int - 10.0 * 2f64.log10();
        let two = aggregate_sinr(&s, &[
            InterferenceTerm { tx_node: NodeId(5), power_dbm: half, overlap },
            InterferenceTerm { tx_node: NodeId(6), power_dbm: half, overlap },
        ]);
        prop_assert!((one.sinr_db - two.sinr_db).abs() < 1e-9);
        prop_assert!(one.sinr_db <= s.snr_db);
    }

    #[test]
    fn bits_monotone(sinr in -10.0f64..40.0, ds in 0.0f64..5.0, n in 0u8..12, bw in 1e6f64..4e8, dbw in 0.0f64..1e8) {
        let rm = RateMap::default();
        let nu = Numerology::default();
        let b = achievable_bits(sinr, n, bw, &rm, &nu);
        prop_assert!(achievable_bits(sinr + ds, n, bw, &rm, &nu) >= b);
        prop_assert!(achievable_bits(sinr, n + 1, bw, &rm, &nu) >= b);
        prop_assert!(achievable_bits(sinr, n, bw + dbw, &rm, &nu) >= b);
    }

    #[test]
    fn gain_bounded_and_selection_deterministic(x in -3000.0f64..3000.0, y in 100.0f64..3000.0) {
        let cfg = UpaConfig::<f64>::default().with_boresight(90.0, 0.0);
        let from = [0.0, 0.0, 20.0];
        let to = [x, y, 10.0];
        let a = select_beam(from, to, &cfg).unwrap();
        let b = select_beam(from, to, &cfg).unwrap();
        prop_assert_eq!(a.codebook_index, b.codebook_index);
        let g = total_gain_db(&a, &local_direction(from, to, &cfg).unwrap(), &cfg);
        prop_assert!(g <= 13.0 + 10.0 * 64f64.log10() + 1e-9);
    }
}
