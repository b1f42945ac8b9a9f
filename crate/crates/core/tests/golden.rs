//! Reference outputs for seed-42 weights on a fixed frame, recorded once from
//! this implementation and pinned. Any change to kernel arithmetic, loop
//! order, weight generation or fusion shows up here.

use cwseg_core::io::gen_weights;
use cwseg_core::net::{argmax_mask, build_net, NetConfig};
use cwseg_core::{synth, Exec};

fn fnv1a(words: impl Iterator<Item = u32>) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for w in words {
        for b in w.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

fn bits(t: &cwseg_core::Tensor) -> u64 {
    fnv1a(t.data().iter().map(|v| v.to_bits()))
}

#[test]
fn seed_42_reference_frame() {
    let cfg = NetConfig::default();
    let store = gen_weights(&cfg, 42).unwrap();
    let frame = synth::random_frame(3, 64, 64, 7);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let net = build_net(cfg, &store).unwrap().with_exec(exec);
        let out = net.full_forward(&frame).unwrap();
        assert_eq!(bits(&out.score_pool3), 0xb05a_f83d_11e7_a03c, "{exec:?}");
        assert_eq!(bits(&out.score_pool4), 0xb447_c126_1578_bbfc, "{exec:?}");
        assert_eq!(
            bits(out.score_fr.as_ref().unwrap()),
            0x62d1_5d65_d677_d170,
            "{exec:?}"
        );
        assert_eq!(bits(&out.final_scores), 0xe68d_b9ca_36db_59c8, "{exec:?}");
        let mask = argmax_mask(&out.final_scores);
        assert_eq!(
            fnv1a(mask.labels().iter().map(|&l| l as u32)),
            0x8e73_af74_7f67_bcd4
        );
        assert_eq!(mask.labels().iter().filter(|&&l| l == 1).count(), 169);
    }
}

#[test]
fn default_net_work_profile() {
    let cfg = NetConfig::default();
    let net = build_net(cfg, &gen_weights(&cfg, 42).unwrap()).unwrap();
    let out = net
        .full_forward(&synth::random_frame(3, 64, 64, 7))
        .unwrap();
    let macs = out.work.map(|w| w.macs);
    // conv1_1: 8 out * 64*64 * 3 in * 9 = 884_736, and so on down the table.
    assert_eq!(macs, [10_326_016, 3_540_992, 24_775_680]);
    assert_eq!(out.work.map(|w| w.convs), [7, 3, 3]);
}
