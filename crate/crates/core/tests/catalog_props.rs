use ppt_core::catalog::{
    builtin_fixtures, from_text, load_catalog, save_catalog, to_text, CatalogEntry, EntryProblem,
    Provenance,
};
use ppt_core::deriv::{solve, DerivProblem};
use ppt_core::synthesis::{minimize, validate_with_step, ProfileClass, SynthesisProblem};
use ppt_core::Error;

fn twenty_entries() -> Vec<CatalogEntry> {
    let mut entries = builtin_fixtures();
    let prob = DerivProblem::new(0.5, 1, 1e-10).unwrap();
    for (k, s) in solve(&prob, 60, 2).unwrap().iter().take(3).enumerate() {
        entries.push(CatalogEntry::from_deriv(&format!("D-H3-{k}"), s, &prob, "derived").unwrap());
    }
    let prob = SynthesisProblem::new(ProfileClass::Narrowband, 0.5, 7, 0.9, 1e-4).unwrap();
    let run = minimize(&prob, 40, 3).unwrap();
    for (k, r) in run.results.iter().take(20 - entries.len()).enumerate() {
        entries.push(CatalogEntry::from_synthesis(
            &format!("S-NB7-{k}"),
            r,
            &prob,
            "derived",
        ));
    }
    assert_eq!(entries.len(), 20);
    entries
}

#[test]
fn twenty_entries_round_trip_byte_for_byte() {
    let entries = twenty_entries();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cat.txt");
    save_catalog(&entries, &path).unwrap();
    let first = std::fs::read(&path).unwrap();
    let loaded = load_catalog(&path).unwrap();
    assert_eq!(loaded.len(), 20);
    assert!(loaded[14..]
        .iter()
        .all(|e| e.provenance == Provenance::Derived));
    save_catalog(&loaded, &path).unwrap();
    assert_eq!(first, std::fs::read(&path).unwrap());
}

#[test]
fn junk_trains_are_rejected() {
    let good = to_text(&builtin_fixtures()[..1]);
    assert!(from_text(&good).is_ok());
    let rabi_line = good.lines().find(|l| l.starts_with("rabi:")).unwrap();
    let det_line = good.lines().find(|l| l.starts_with("detunings:")).unwrap();
    for bad in [
        good.replace(rabi_line, "rabi: nan"),
        good.replace(rabi_line, "rabi: 1e400"),
        good.replace(rabi_line, "rabi: -0.5"),
        good.replace(det_line, "detunings: 0.72, 0, 0.72"),
        good.replace(det_line, "detunings: 0.72, inf, -0.72"),
        // finite and antisymmetric but no longer a root
        good.replace(rabi_line, "rabi: 0.5"),
    ] {
        let err = from_text(&bad).unwrap_err();
        assert!(
            matches!(err, Error::Parse { .. } | Error::InvalidInput(_)),
            "{err:?}"
        );
    }
}

#[test]
fn fixtures_survive_grid_refinement() {
    for e in builtin_fixtures() {
        if let EntryProblem::Synthesis(p) = &e.problem {
            for step in [1e-3, 5e-4] {
                assert!(
                    validate_with_step(&e.train, p, step).unwrap().validated,
                    "{} at {step}",
                    e.id
                );
            }
        }
    }
}
