//! Golden files over the canonical text serialization: pins the exact term
//! content of the derivation operators and builders on small fixed inputs.
//! Regenerate with `NCLAB_BLESS=1 cargo test -p nclab --test golden` after an
//! intentional change, and review the diff like code.

use nclab::ncpoly::rbuild::{r1_build, r2_build};
use nclab::ncpoly::{
    cayley_partial, cyclic_gradient, normalize, partial, sharp, star, to_canonical_string, Family,
    Letter, NcPoly,
};
use nclab::scalar::{cq, cq_int, qi};
use std::path::PathBuf;

fn x(i: u32) -> NcPoly {
    NcPoly::from_letter(Letter::x(i))
}

fn u(i: u32, e: i8) -> NcPoly {
    NcPoly::from_letter(Letter::u(i, e))
}

/// x_{1,{2,1}}^4: a quartic in one first-interpolation family, the smallest
/// input on which the second-level builder is nonzero.
fn j1_quartic() -> NcPoly {
    NcPoly::monomial(vec![Letter::x_fam(Family::J1([2, 1]), 1); 4], cq_int(1))
}

/// (x_{1,{2,1}} x_{1,{3,1}})^3: mixes two first-interpolation families at
/// degree 6, the smallest case where the per-variant index constraints give
/// different outputs (quartics collapse to the same constant under all
/// three).
fn j1_mixed_sextic() -> NcPoly {
    let a = Letter::x_fam(Family::J1([2, 1]), 1);
    let b = Letter::x_fam(Family::J1([3, 1]), 1);
    NcPoly::monomial(vec![a, b, a, b, a, b], cq_int(1))
}

fn fixtures() -> Vec<(&'static str, NcPoly)> {
    let x1x2x1 = &(&x(1) * &x(2)) * &x(1);
    let x1x2x1x3 = &x1x2x1 * &x(3);
    let alt = &(&x(1) * &x(2)) * &(&x(1) * &x(2));
    let mixed = &(&u(1, 1) * &x(1)).scale(&cq(qi(2), qi(1))) + &u(2, -1);
    let laurent = &(&u(1, 1) * &u(1, -1)) * &(&u(2, 1) * &u(1, 1));

    vec![
        (
            "partial_x1x2x1_slot_embedding",
            sharp(
                &partial(&x1x2x1, 1).unwrap(),
                &[Family::Tag(7), Family::Tag(8)],
            )
            .unwrap(),
        ),
        (
            "cayley_partial_u1_slot_embedding",
            sharp(
                &cayley_partial(&u(1, 1), 1).unwrap(),
                &[Family::Tag(7), Family::Tag(8)],
            )
            .unwrap(),
        ),
        (
            "cyclic_gradient_x1x2x1x3",
            cyclic_gradient(&x1x2x1x3, 1).unwrap(),
        ),
        ("star_mixed_poly", star(&mixed)),
        ("normalize_laurent_word", normalize(&laurent)),
        ("r1_x1x2x1x2", r1_build(&alt, 2).unwrap()),
        (
            "r2_variant1_of_r1_x1x2x1x2",
            r2_build(&r1_build(&alt, 2).unwrap(), 1).unwrap(),
        ),
        ("r1_x1_sixth", r1_build(&x(1).pow(6), 1).unwrap()),
        (
            "r2_variant1_of_r1_x1_sixth",
            r2_build(&r1_build(&x(1).pow(6), 1).unwrap(), 1).unwrap(),
        ),
        (
            "r2_variant1_j1_quartic",
            r2_build(&j1_quartic(), 1).unwrap(),
        ),
        (
            "r2_variant2_j1_quartic",
            r2_build(&j1_quartic(), 2).unwrap(),
        ),
        (
            "r2_variant3_j1_quartic",
            r2_build(&j1_quartic(), 3).unwrap(),
        ),
        (
            "r2_variant1_j1_mixed_sextic",
            r2_build(&j1_mixed_sextic(), 1).unwrap(),
        ),
        (
            "r2_variant2_j1_mixed_sextic",
            r2_build(&j1_mixed_sextic(), 2).unwrap(),
        ),
        (
            "r2_variant3_j1_mixed_sextic",
            r2_build(&j1_mixed_sextic(), 3).unwrap(),
        ),
    ]
}

#[test]
fn canonical_forms_match_golden_files() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let bless = std::env::var_os("NCLAB_BLESS").is_some();
    if bless {
        std::fs::create_dir_all(&dir).unwrap();
    }
    let mut mismatches = Vec::new();
    for (name, poly) in fixtures() {
        let got = to_canonical_string(&poly) + "\n";
        let path = dir.join(format!("{name}.txt"));
        if bless {
            std::fs::write(&path, &got).unwrap();
            continue;
        }
        let want = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("missing golden file {}: {e}", path.display()));
        if got != want {
            mismatches.push(format!(
                "{name}:\n  got:  {}\n  want: {}",
                got.trim_end(),
                want.trim_end()
            ));
        }
    }
    assert!(mismatches.is_empty(), "{}", mismatches.join("\n"));
}

/// The scalar-4 closed case doubles as a guard that the golden fixtures are
/// built from the operators they claim to pin.
#[test]
fn golden_fixture_sanity() {
    let x4 = NcPoly::monomial(vec![Letter::x(1); 4], cq_int(1));
    assert_eq!(r1_build(&x4, 1).unwrap(), NcPoly::scalar(cq_int(4)));
}
