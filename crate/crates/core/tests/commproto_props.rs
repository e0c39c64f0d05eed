use mmab_core::commproto::{
    back_and_forth, receive_value, send_value_schedule, BackAndForth, BitMessage,
};
use proptest::prelude::*;

fn grid_value(p: u32, i: u64) -> f64 {
    let n = 1u64 << p;
    (i % (n + 1)) as f64 / n as f64
}

fn mask_to_rounds(mask: u32, len: usize) -> Vec<usize> {
    (0..len).filter(|n| (mask >> n) & 1 == 1).collect()
}

proptest! {
    #[test]
    fn jamming_only_sets_bits(p in 0u32..12, i in any::<u64>(), jam in any::<u32>()) {
        let v = grid_value(p, i);
        let (sender, receiver) = (0, 1);
        let sched = send_value_schedule(sender, receiver, p, v).unwrap();
        let bits: Vec<bool> = sched
            .iter()
            .enumerate()
            .map(|(n, &a)| a == receiver || (jam >> n) & 1 == 1)
            .collect();
        let sent = BitMessage::encode(v, p).unwrap();
        prop_assert!(sent.is_subset_of(&BitMessage::from_bits(bits.clone())));
        prop_assert!(receive_value(&bits) >= v);
    }

    #[test]
    fn clean_echo_means_clean_delivery(p in 0u32..8, i in any::<u64>(), fwd in any::<u32>(), back in any::<u32>()) {
        let v = grid_value(p, i);
        let len = p as usize + 1;
        let out = back_and_forth(p, v, &mask_to_rounds(fwd, len), &mask_to_rounds(back, len)).unwrap();
        let sent = BitMessage::encode(v, p).unwrap();
        if !out.corrupted {
            prop_assert_eq!(&out.received, &sent);
        }
        let zeros: u32 = sent.bits().iter().enumerate().filter(|(_, &b)| !b).map(|(n, _)| 1 << n).sum();
        if fwd & zeros != 0 {
            prop_assert!(out.corrupted);
        }
    }

    #[test]
    fn exchange_length_ignores_the_value(p in 0u32..16, i in any::<u64>(), j in any::<u64>()) {
        let a = BitMessage::encode(grid_value(p, i), p).unwrap();
        let b = BitMessage::encode(grid_value(p, j), p).unwrap();
        let d = BackAndForth::sender(&a, 0, 1).duration();
        prop_assert_eq!(d, BackAndForth::sender(&b, 2, 3).duration());
        prop_assert_eq!(d, BackAndForth::receiver(p as usize + 1, 1, 0).duration());
        prop_assert_eq!(d, 2 * (p as usize + 1));
    }
}
