mod common;

use triplet_analogy::structure::TripletStructure;

use common::checks::fixpoint_failures;

#[test]
fn dump_load_dump_is_a_fixpoint_on_all_fixtures() {
    assert_eq!(fixpoint_failures(), Vec::<String>::new());
}

#[test]
fn parse_errors_carry_a_line_number() {
    let err = TripletStructure::from_text("# triplet-structure v1\nnode a\nfact a b\n").unwrap_err();
    assert!(err.to_string().contains('3'), "{err}");
}
