mod common;

use proptest::prelude::*;
use skelmap::skeleton::{parse_sample_name, parse_skeleton_file, write_skeleton_file};

#[test]
fn fuzz_campaign() {
    common::parser_fuzz(100_000).unwrap();
}

#[test]
fn sample_names_round_trip() {
    common::name_round_trip(1000).unwrap();
}

proptest! {
    #[test]
    fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        let _ = parse_skeleton_file(&bytes);
    }

    #[test]
    fn arbitrary_names_never_panic(name in "\\PC{0,32}") {
        let _ = parse_sample_name(&name);
    }

    #[test]
    fn written_files_parse_back(seed in any::<u64>(), frames in 1usize..8) {
        let mut r = common::rng(seed);
        let seq = common::random_sequence(&mut r, frames, seed % 2 == 0);
        let back = parse_skeleton_file(write_skeleton_file(&seq).as_bytes()).unwrap();
        prop_assert_eq!(back.len(), seq.len());
        for (a, b) in seq.joints().zip(back.joints()) {
            prop_assert!((a - b).amax() < 1e-9);
        }
    }
}
