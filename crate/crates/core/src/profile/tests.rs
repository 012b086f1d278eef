use super::*;
use crate::alphabet::{encode, encode_strict, index_to_letter, RESIDUE_ORDER};
use crate::fasta::SequenceRecord;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FIXTURE: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/stack_fixture.txt"));
const EXPECTED: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/pssm_expected.txt"));
const ASCII_GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/stack_fixture.pssm.txt");

fn blosum() -> SubstitutionMatrix {
    SubstitutionMatrix::blosum62()
}

fn golden(query: &str, members: &[&str]) -> GoldenSet {
    let q = SequenceRecord::from_letters("q1", query);
    let mut set = GoldenSet::only_query("q1", q);
    for (i, m) in members.iter().enumerate() {
        set.members.push(SequenceRecord::from_letters(format!("m{i}"), m));
    }
    set
}

fn fixture() -> (GoldenSet, Vec<Vec<u8>>) {
    let mut query = "";
    let mut members = Vec::new();
    let mut expect = Vec::new();
    for line in FIXTURE.lines().filter(|l| !l.starts_with('#')) {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts[0] {
            "query" => query = parts[2],
            "member" => members.push(parts[2]),
            "expect" => expect.push(
                parts[1]
                    .bytes()
                    .map(|b| if b == b'-' { GAP } else { encode(&[b]).0[0] })
                    .collect(),
            ),
            other => panic!("bad fixture line kind {other}"),
        }
    }
    (golden(query, &members), expect)
}

fn fixture_pssm() -> Pssm {
    let (set, _) = fixture();
    let m = blosum();
    let stack = stack_alignments(&set, &m, &GappedKarlinParams::default(), DEFAULT_INCLUSION_EVALUE).unwrap();
    build_pssm("q1", &stack, &m, DEFAULT_BETA).unwrap()
}

fn random_golden(seed: u64, members: usize) -> GoldenSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = rng.gen_range(20..70);
    let query: Vec<u8> = (0..len).map(|_| rng.gen_range(0..20)).collect();
    let mut set = GoldenSet::only_query("q", SequenceRecord::new("q", query.clone()));
    for i in 0..members {
        let start = rng.gen_range(0..len / 3);
        let end = rng.gen_range(2 * len / 3..=len);
        let mut m = Vec::new();
        for &r in &query[start..end] {
            match rng.gen_range(0..12) {
                0 => m.push(rng.gen_range(0..20)),
                1 => {}
                2 => {
                    m.push(r);
                    m.push(rng.gen_range(0..20));
                }
                _ => m.push(r),
            }
        }
        set.members.push(SequenceRecord::new(format!("m{i}"), m));
    }
    set
}

#[test]
fn query_only_stack() {
    let set = golden("MKWVTF", &[]);
    let stack = stack_alignments(&set, &blosum(), &GappedKarlinParams::default(), 10.0).unwrap();
    assert_eq!(stack.rows().len(), 1);
    for pos in 0..6 {
        assert_eq!(stack.column(pos), [set.query.residues[pos]]);
    }
    let empty = GoldenSet {
        members: vec![],
        ..set
    };
    assert!(matches!(
        stack_alignments(&empty, &blosum(), &GappedKarlinParams::default(), 10.0),
        Err(Error::EmptyGoldenSet)
    ));
}

#[test]
fn identical_member_doubles_each_column() {
    let q = "MKWVTFISLLLLFSSAYSRG";
    let set = golden(q, &[q]);
    let stack = stack_alignments(&set, &blosum(), &GappedKarlinParams::default(), 10.0).unwrap();
    for (pos, &r) in set.query.residues.iter().enumerate() {
        assert_eq!(stack.column(pos), [r, r]);
    }
}

#[test]
fn hand_derived_stack() {
    let (set, expect) = fixture();
    let stack = stack_alignments(&set, &blosum(), &GappedKarlinParams::default(), DEFAULT_INCLUSION_EVALUE).unwrap();
    assert_eq!(stack.rows(), expect.as_slice());
}

#[test]
fn query_only_profile_reproduces_matrix_rows() {
    let m = blosum();
    let query: Vec<u8> = (0..20).collect();
    let pssm = build_pssm("q", &ColumnStack::query_only(&query), &m, DEFAULT_BETA).unwrap();
    for (r, col) in pssm.columns.iter().enumerate() {
        assert_eq!(col.n_eff, 1.0);
        for i in 0..CANONICAL {
            assert!((col.mixed_freqs[i] - col.pseudo_freqs[i]).abs() < 1e-15);
        }
        for i in 0..CANONICAL {
            assert_eq!(col.scores[i], m.score(r as u8, i as u8), "row {r} col {i}");
        }
    }
}

#[test]
fn unknown_query_residue_scores_zero() {
    let pssm = build_pssm("q", &ColumnStack::query_only(&[20]), &blosum(), DEFAULT_BETA).unwrap();
    assert_eq!(pssm.columns[0].scores, [0; CANONICAL]);
    assert!(pssm.columns[0].info_content.abs() < 1e-12);
}

#[test]
fn conserved_column_peaks_at_its_residue() {
    let q = "MKWVTFISLLLLFSSAYSRGVFRRDTHKSEIAHRFKDLGE";
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let members: Vec<String> = (0..30)
        .map(|_| {
            q.bytes()
                .enumerate()
                .map(|(i, b)| {
                    if i != 10 && rng.gen_bool(0.3) {
                        RESIDUE_ORDER[rng.gen_range(0..20)] as char
                    } else {
                        b as char
                    }
                })
                .collect()
        })
        .collect();
    let refs: Vec<&str> = members.iter().map(String::as_str).collect();
    let set = golden(q, &refs);
    let m = blosum();
    let pssm = profile_golden_set(&set, &m, &GappedKarlinParams::default(), &ProfileConfig::default()).unwrap();
    let col = &pssm.columns[10];
    let l = encode(b"L").0[0] as usize;
    assert!(col.n_eff > 1.0);
    assert_eq!(col.scores.iter().max(), Some(&col.scores[l]));
    assert!(col.mixed_freqs[l] > 0.5);
}

#[test]
fn fixture_matches_independent_oracle() {
    let pssm = fixture_pssm();
    let rows: Vec<&str> = EXPECTED.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), pssm.len());
    for (col, line) in pssm.columns.iter().zip(rows) {
        let fields: Vec<&str> = line.split_whitespace().collect();
        for i in 0..CANONICAL {
            assert_eq!(col.scores[i], fields[i].parse::<i32>().unwrap());
            let f: f64 = fields[CANONICAL + i].parse().unwrap();
            assert!((col.mixed_freqs[i] - f).abs() < 1e-9, "{} vs {f}", col.mixed_freqs[i]);
        }
    }
}

#[test]
fn ascii_output_matches_golden_file() {
    let mut out = Vec::new();
    write_ascii_pssm(&fixture_pssm(), &mut out).unwrap();
    if std::env::var_os("PROFGEN_BLESS").is_some() {
        std::fs::write(ASCII_GOLDEN, &out).unwrap();
    }
    let golden = std::fs::read_to_string(ASCII_GOLDEN).unwrap();
    assert_eq!(String::from_utf8(out).unwrap(), golden);
}

#[test]
fn single_residue_ascii_row() {
    let m = blosum();
    let w = encode(b"W").0;
    let pssm = build_pssm("q", &ColumnStack::query_only(&w), &m, DEFAULT_BETA).unwrap();
    let mut out = Vec::new();
    write_ascii_pssm(&pssm, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    let fields: Vec<&str> = lines[2].split_whitespace().collect();
    assert_eq!(fields[..2], ["1", "W"]);
    let scores: Vec<i32> = fields[2..22].iter().map(|s| s.parse().unwrap()).collect();
    assert_eq!(scores, m.row(w[0])[..CANONICAL]);
    let pct: i64 = fields[22..42].iter().map(|s| s.parse::<i64>().unwrap()).sum();
    assert!((95..=105).contains(&pct));
}

#[test]
fn binary_round_trip_300_columns() {
    let m = blosum();
    let set = random_golden(3, 12);
    let mut query = set.members[0].residues.clone();
    while query.len() < 300 {
        query.extend_from_slice(&set.members[0].residues);
    }
    query.truncate(300);
    let stack = ColumnStack::from_rows(vec![query.clone(), query.iter().map(|&r| (r + 1) % 21).collect()]);
    let pssm = build_pssm("q1 some\tdescription", &stack, &m, 7.5).unwrap();
    let mut buf = Vec::new();
    write_binary_pssm(&pssm, &mut buf).unwrap();
    assert_eq!(&buf[..4], PSSM_MAGIC);
    assert_eq!(read_binary_pssm(buf.as_slice()).unwrap(), pssm);
    assert!(read_binary_pssm(&buf[..buf.len() - 1]).is_err());
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(matches!(read_binary_pssm(bad.as_slice()), Err(Error::BadPssm(_))));
}

#[test]
fn config_validation_and_iterations() {
    let m = blosum();
    let g = GappedKarlinParams::default();
    assert!(build_pssm("q", &ColumnStack::query_only(&[0]), &m, 0.0).is_err());
    let set = random_golden(11, 8);
    let one = profile_golden_set(&set, &m, &g, &ProfileConfig::default()).unwrap();
    let two = profile_golden_set(&set, &m, &g, &ProfileConfig { iterations: 2, ..Default::default() }).unwrap();
    assert_eq!(one.len(), two.len());
    let strict = profile_golden_set(&set, &m, &g, &ProfileConfig { inclusion_evalue: 0.0, ..Default::default() }).unwrap();
    assert!(strict.columns.iter().all(|c| c.n_eff == 1.0));
}

#[test]
fn letters_in_ascii_are_query_residues() {
    let pssm = fixture_pssm();
    let mut out = Vec::new();
    write_ascii_pssm(&pssm, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let letters: String = text.lines().skip(2).map(|l| l.split_whitespace().nth(1).unwrap()).collect();
    assert_eq!(encode_strict(letters.as_bytes()).unwrap(), fixture().0.query.residues);
    assert_eq!(index_to_letter(pssm.columns[0].query_residue), b'M');
}

#[test]
fn duplicate_can_shift_a_contested_column() {
    // Position-based weights split a duplicate's weight only in columns
    // where its residue is unique; where it agrees with other rows the pair
    // gains weight, so a contested column can change leader.
    let m = blosum();
    let g = GappedKarlinParams::default();
    let q = "MKWVTFISLLLLFSSAYSRGVFRRDTHKSEIAHRFKDLGE";
    let member = q.replacen('A', "W", 1);
    let set = golden(q, &[&member]);
    let mut dup = set.clone();
    dup.members.push(dup.members[1].clone());
    let pos = q.find('A').unwrap();
    let (a, w) = (encode(b"A").0[0] as usize, encode(b"W").0[0] as usize);
    let before = &profile_golden_set(&set, &m, &g, &ProfileConfig::default()).unwrap().columns[pos];
    let after = &profile_golden_set(&dup, &m, &g, &ProfileConfig::default()).unwrap().columns[pos];
    assert!(after.weighted_freqs[w] > before.weighted_freqs[w]);
    assert!(after.scores[w] - after.scores[a] >= before.scores[w] - before.scores[a]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(std::env::var("PT_CASES").ok().and_then(|v| v.parse().ok()).unwrap_or(24)))]

    #[test]
    fn frequency_vectors_are_distributions(seed in any::<u64>(), n in 0usize..8) {
        let m = blosum();
        let set = random_golden(seed, n);
        let pssm = profile_golden_set(&set, &m, &GappedKarlinParams::default(), &ProfileConfig::default()).unwrap();
        prop_assert_eq!(pssm.len(), set.query.len());
        for c in &pssm.columns {
            for v in [&c.weighted_freqs, &c.pseudo_freqs, &c.mixed_freqs] {
                prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
            prop_assert!(c.pseudo_freqs.iter().all(|&g| g > 0.0));
            prop_assert!(c.info_content >= 0.0);
            prop_assert!(c.n_eff >= 1.0);
        }
    }

    #[test]
    fn member_order_does_not_matter(seed in any::<u64>(), n in 2usize..8, rot in 1usize..7) {
        let m = blosum();
        let g = GappedKarlinParams::default();
        let set = random_golden(seed, n);
        let mut permuted = set.clone();
        permuted.members[1..].rotate_left(rot % n);
        permuted.members[1..].reverse();
        let a = profile_golden_set(&set, &m, &g, &ProfileConfig::default()).unwrap();
        let b = profile_golden_set(&permuted, &m, &g, &ProfileConfig::default()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn duplicate_member_keeps_argmax(seed in any::<u64>(), n in 1usize..6, pick in 0usize..6) {
        let m = blosum();
        let g = GappedKarlinParams::default();
        let set = random_golden(seed, n);
        let mut dup = set.clone();
        dup.members.push(set.members[1 + pick % n].clone());
        let a = profile_golden_set(&set, &m, &g, &ProfileConfig::default()).unwrap();
        let b = profile_golden_set(&dup, &m, &g, &ProfileConfig::default()).unwrap();
        // Only unanimous columns are pinned; see the contested-column test.
        prop_assert_eq!(a.columns[0].n_eff, b.columns[0].n_eff);
        let stack = stack_alignments(&set, &m, &g, DEFAULT_INCLUSION_EVALUE).unwrap();
        for (pos, (x, y)) in a.columns.iter().zip(&b.columns).enumerate() {
            let mut col = stack.column(pos);
            col.retain(|&r| (r as usize) < CANONICAL);
            col.dedup();
            if col.len() != 1 {
                continue;
            }
            let r = col[0] as usize;
            prop_assert_eq!(*x.scores.iter().max().unwrap(), x.scores[r]);
            prop_assert_eq!(*y.scores.iter().max().unwrap(), y.scores[r]);
        }
    }

    #[test]
    fn query_only_profile_is_matrix(query in prop::collection::vec(0u8..20, 1..50)) {
        let m = blosum();
        let pssm = build_pssm("q", &ColumnStack::query_only(&query), &m, DEFAULT_BETA).unwrap();
        for (col, &r) in pssm.columns.iter().zip(&query) {
            for i in 0..CANONICAL {
                prop_assert!((col.scores[i] - m.score(r, i as u8)).abs() <= 1);
            }
        }
    }
}

