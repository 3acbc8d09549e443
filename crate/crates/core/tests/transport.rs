use proptest::prelude::*;
use stencilpipe_core::transport::{create_topology, Backend, Endpoint};

fn pair(backend: Backend) -> (Endpoint, Endpoint) {
    let mut eps = create_topology(2, backend).unwrap();
    let b = eps.pop().unwrap();
    (eps.pop().unwrap(), b)
}

fn stress(backend: Backend, iterations: usize) {
    let (mut a, mut b) = pair(backend);
    std::thread::scope(|s| {
        s.spawn(move || {
            for i in 0..iterations {
                let msg = (i as u64).to_le_bytes();
                let got = b.sendrecv(0, &msg, 8).unwrap();
                assert_eq!(u64::from_le_bytes(got.try_into().unwrap()), 2 * i as u64);
            }
        });
        for i in 0..iterations {
            let msg = (2 * i as u64).to_le_bytes();
            let got = a.sendrecv(1, &msg, 8).unwrap();
            assert_eq!(u64::from_le_bytes(got.try_into().unwrap()), i as u64);
        }
    });
}

#[test]
fn simultaneous_sendrecv_never_deadlocks() {
    stress(Backend::InProcess, 10_000);
    stress(Backend::Tcp, 10_000);
}

#[test]
fn large_simultaneous_messages_over_tcp() {
    // both sides push more than a socket buffer before reading
    let (mut a, mut b) = pair(Backend::Tcp);
    let big: Vec<u8> = (0..8 << 20).map(|i: u32| (i % 253) as u8).collect();
    std::thread::scope(|s| {
        let big2 = big.clone();
        s.spawn(move || assert_eq!(b.sendrecv(0, &big2, big2.len()).unwrap(), big2));
        assert_eq!(a.sendrecv(1, &big, big.len()).unwrap(), big);
    });
}

#[test]
fn all_pairs_reachable() {
    let eps = create_topology(8, Backend::InProcess).unwrap();
    std::thread::scope(|s| {
        for mut ep in eps {
            s.spawn(move || {
                let me = ep.rank();
                // pairwise rounds in a fixed order on every rank
                for peer in (0..8).filter(|&p| p != me) {
                    let got = ep.sendrecv(peer, &[me as u8], 1).unwrap();
                    assert_eq!(got, [peer as u8]);
                }
                ep.barrier().unwrap();
            });
        }
    });
}

#[test]
fn single_rank_is_trivially_connected() {
    let mut eps = create_topology(1, Backend::InProcess).unwrap();
    eps[0].barrier().unwrap();
    assert!(create_topology(0, Backend::InProcess).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn ordered_and_bit_exact(msgs in prop::collection::vec(prop::collection::vec(any::<u8>(), 0..2048), 1..20)) {
        for backend in [Backend::InProcess, Backend::Tcp] {
            let (mut a, mut b) = pair(backend);
            for m in &msgs {
                a.send(1, m).unwrap();
            }
            for m in &msgs {
                prop_assert_eq!(&b.recv(0, m.len()).unwrap(), m);
            }
        }
    }
}
