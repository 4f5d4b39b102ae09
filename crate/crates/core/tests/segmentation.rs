mod support;

use entail_guard::segment::split_sentences;
use support::*;

#[test]
fn hand_labelled_fixture_agrees() {
    let (checked, mismatches) = check_segmentation_fixture();
    assert_eq!(checked, 60);
    assert!(mismatches.is_empty(), "{}", mismatches.join("\n"));
}

#[test]
fn random_concatenations_round_trip() {
    let failures = check_random_concatenations(300, 17);
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn abbreviation_does_not_split() {
    let s = split_sentences("Dr. Smith arrived. He sat down.");
    assert_eq!(s.len(), 2);
    assert_eq!(s[0].text, "Dr. Smith arrived.");
}

#[test]
fn decimal_does_not_split() {
    let s = split_sentences("It cost 3.50 dollars. Cheap.");
    assert_eq!(s[0].text, "It cost 3.50 dollars.");
}

#[test]
fn closing_quote_stays_with_its_sentence() {
    let s = split_sentences("He said \"go.\" Then he left.");
    assert_eq!(s[0].text, "He said \"go.\"");
    assert_eq!(s[1].text, "Then he left.");
}

#[test]
fn trailing_fragment_is_flagged() {
    let s = split_sentences("Complete one. Half of anoth");
    assert_eq!(s.len(), 2);
    assert!(s[0].terminated);
    assert!(!s[1].terminated);
}

#[test]
fn offsets_count_unicode_scalars() {
    let text = "Café opened. Naïve guests came.";
    let s = split_sentences(text);
    let chars: Vec<char> = text.chars().collect();
    assert_eq!(s[1].char_start, 13);
    let slice: String = chars[s[1].char_start..s[1].char_end].iter().collect();
    assert_eq!(slice, "Naïve guests came.");
}
