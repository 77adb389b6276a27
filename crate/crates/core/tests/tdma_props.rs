use proptest::prelude::*;
use uhs_core::tdma::{ChannelConfig, EventKind, RogueTransmission, SlotTime, TdmaChannel, TdmaSchedule, Traffic};
use uhs_core::{ActivityId, SensorFrame};

fn frame(node: u16, seq: u16) -> SensorFrame {
    SensorFrame::activity(node, seq, 0, ActivityId::Walking)
}

/// Arrival times per node, sorted, within the first `superframes` superframes.
fn arb_arrivals(nodes: u16, superframes: u64) -> impl Strategy<Value = Vec<Vec<u64>>> {
    let horizon = superframes * 180;
    prop::collection::vec(prop::collection::vec(0..horizon, 0..40), nodes as usize).prop_map(|mut v| {
        v.iter_mut().for_each(|a| a.sort_unstable());
        v
    })
}

fn arb_rogue(nodes: u16, superframes: u64) -> impl Strategy<Value = Vec<RogueTransmission>> {
    prop::collection::vec(
        (1..=nodes, 0..superframes, 0u16..9)
            .prop_map(|(node_id, superframe, slot)| RogueTransmission { node_id, at: SlotTime { superframe, slot } }),
        0..10,
    )
}

fn build(arrivals: &[Vec<u64>], latest_wins: bool) -> (TdmaSchedule, Traffic, usize) {
    let mut s = TdmaSchedule::default();
    let mut traffic = Traffic { latest_wins, ..Traffic::default() };
    let mut total = 0;
    for (i, times) in arrivals.iter().enumerate() {
        let node = i as u16 + 1;
        s.register_node(node).unwrap();
        for (k, t) in times.iter().enumerate() {
            traffic.enqueue(node, *t, frame(node, k as u16));
            total += 1;
        }
    }
    (s, traffic, total)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn every_frame_is_accounted_for(
        arrivals in arb_arrivals(6, 30),
        rogue in arb_rogue(6, 30),
        loss in 0.0f64..=1.0,
        seed in any::<u64>(),
        latest_wins in any::<bool>(),
    ) {
        let (s, mut traffic, total) = build(&arrivals, latest_wins);
        traffic.rogue = rogue;
        let mut ch = TdmaChannel::new(s, ChannelConfig { loss_probability: loss, seed }).unwrap();
        let out = ch.run_superframes(&mut traffic, 40).unwrap();
        prop_assert!(out.stats.values().all(|s| s.is_conserved()));
        let t = out.totals();
        prop_assert_eq!(t.offered + t.superseded + traffic.pending() as u64, total as u64);
        prop_assert_eq!(t.delivered as usize, out.count(EventKind::Delivered));
        prop_assert_eq!(t.violation_dropped as usize, out.violation_count());
        // Compliant nodes own distinct slots, so nothing collides.
        prop_assert_eq!(out.count(EventKind::Collision), 0);
    }

    #[test]
    fn fifo_delivers_in_order_without_rogues(arrivals in arb_arrivals(4, 20), seed in any::<u64>()) {
        let (s, mut traffic, _) = build(&arrivals, false);
        let mut ch = TdmaChannel::new(s, ChannelConfig { loss_probability: 0.2, seed }).unwrap();
        let out = ch.run_superframes(&mut traffic, 60).unwrap();
        for node in 1..=4u16 {
            let sent: Vec<u16> = out
                .events
                .iter()
                .flat_map(|e| e.frames.iter())
                .filter(|f| f.node_id == node)
                .map(|f| f.frame.seq)
                .collect();
            prop_assert!(sent.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(out.stats[&node].superseded, 0);
        }
        for e in &out.events {
            for f in &e.frames {
                prop_assert!(e.start_ms >= f.enqueued_ms);
            }
        }
    }

    #[test]
    fn latest_wins_sends_the_newest_ready_frame(arrivals in arb_arrivals(3, 20)) {
        let (s, mut traffic, _) = build(&arrivals, true);
        let mut ch = TdmaChannel::new(s, ChannelConfig::default()).unwrap();
        let out = ch.run_superframes(&mut traffic, 25).unwrap();
        for e in out.events.iter().filter(|e| e.kind == EventKind::Delivered) {
            let f = &e.frames[0];
            let times = &arrivals[usize::from(f.node_id) - 1];
            let newest = times.iter().rposition(|&t| t <= e.start_ms).unwrap();
            prop_assert_eq!(usize::from(f.frame.seq), newest);
            // Latest-wins keeps every delivered frame within one superframe of arrival.
            prop_assert!(e.start_ms - f.enqueued_ms <= 180);
        }
    }
}

#[test]
fn loss_rate_matches_configuration() {
    let mut s = TdmaSchedule::default();
    s.register_node(1).unwrap();
    let mut traffic = Traffic::default();
    for k in 0..20_000u64 {
        traffic.enqueue(1, k * 180, frame(1, k as u16));
    }
    let mut ch = TdmaChannel::new(s, ChannelConfig { loss_probability: 0.3, seed: 99 }).unwrap();
    let out = ch.run_superframes(&mut traffic, 20_000).unwrap();
    let rate = out.stats[&1].lost as f64 / out.stats[&1].offered as f64;
    assert!((rate - 0.3).abs() < 0.02, "loss rate {rate}");
}

#[test]
fn runs_continue_where_the_last_one_stopped() {
    let mut s = TdmaSchedule::default();
    s.register_node(1).unwrap();
    let mut traffic = Traffic::default();
    traffic.enqueue(1, 370, frame(1, 0));
    let mut ch = TdmaChannel::new(s, ChannelConfig::default()).unwrap();
    let first = ch.run_superframes(&mut traffic, 2).unwrap();
    assert_eq!(first.totals().offered, 0);
    assert_eq!(ch.next_superframe(), 2);
    let second = ch.run_superframes(&mut traffic, 1).unwrap();
    assert_eq!(second.events[1].kind, EventKind::Delivered);
    assert_eq!(second.events[1].start_ms, 380);
}
