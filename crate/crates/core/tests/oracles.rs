//! Self-checks of the test oracles against known answers.

mod support;

use support::*;

#[test]
fn sha256_known_vectors() {
    assert_eq!(to_hex(&sha256(b"")), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    assert_eq!(to_hex(&sha256(b"abc")), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    assert_eq!(
        to_hex(&sha256(b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq")),
        "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1"
    );
}

#[test]
fn rank_oracles_on_small_sets() {
    assert_eq!(rank_lower_median(&[4, 1, 3, 2]), 2);
    assert_eq!(rank_lower_median(&[5]), 5);
    assert_eq!(rank_percentile(&(1..=20).collect::<Vec<_>>(), 95, 100), 19);
}

#[test]
fn brute_hull_drops_collinear() {
    let v = brute_hull_vertices(&[(0.0, 0.0), (2.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0), (2.0, 2.0)]);
    assert_eq!(v, [(0, 0), (4, 0), (4, 4), (0, 4)].into_iter().collect());
}
