mod common;

use proptest::prelude::*;
use skelmap::encode::{compute_channel_range, encode, encode_auto, quantize, IMAGE_WIDTH};
use skelmap::skeleton::NUM_JOINTS;

#[test]
fn golden_map() {
    common::encoding_golden().unwrap();
}

#[test]
fn thousand_sequence_round_trip() {
    common::quantization_round_trip(1000).unwrap();
}

proptest! {
    #[test]
    fn quantize_is_monotone(a in -100.0f64..100.0, b in -100.0f64..100.0, lo in -200.0f64..-100.0, hi in 100.0f64..200.0) {
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(quantize(x, lo, hi) <= quantize(y, lo, hi));
    }

    #[test]
    fn quantize_hits_the_bounds(lo in -50.0f64..50.0, span in 1e-3f64..100.0) {
        prop_assert_eq!(quantize(lo, lo, lo + span), 0);
        prop_assert_eq!(quantize(lo + span, lo, lo + span), 255);
    }

    #[test]
    fn frames_map_to_rows(seed in any::<u64>(), frames in 1usize..20) {
        let mut r = common::rng(seed);
        let seq = common::random_sequence(&mut r, frames, true);
        let img = encode_auto(&seq);
        prop_assert_eq!((img.height, img.width), (frames, IMAGE_WIDTH));

        // reversing the frames reverses the rows under a fixed range
        let range = compute_channel_range(&seq);
        let mut rev = seq.clone();
        rev.frames.reverse();
        let a = encode(&seq, &range).to_bytes();
        let b = encode(&rev, &range).to_bytes();
        let row = IMAGE_WIDTH * 3;
        for t in 0..frames {
            prop_assert_eq!(&a[t * row..(t + 1) * row], &b[(frames - 1 - t) * row..(frames - t) * row]);
        }
    }

    #[test]
    fn absent_second_body_is_black(seed in any::<u64>(), frames in 1usize..10) {
        let mut r = common::rng(seed);
        let seq = common::random_sequence(&mut r, frames, false);
        let bytes = encode_auto(&seq).to_bytes();
        for t in 0..frames {
            let start = (t * IMAGE_WIDTH + NUM_JOINTS) * 3;
            prop_assert!(bytes[start..(t + 1) * IMAGE_WIDTH * 3].iter().all(|&b| b == 0));
        }
    }
}
