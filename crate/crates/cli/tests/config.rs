use std::path::Path;

use geohmc::dynamics::Scheme;
use geohmc_cli::config::{parse_config, KernelChoice, MetricChoice, TargetChoice, KEYS};
use geohmc_cli::CliError;

fn parse(text: &str) -> Result<geohmc_cli::config::RunConfig, CliError> {
    parse_config(text, Path::new("."))
}

fn config_error(text: &str) -> (usize, String) {
    match parse(text) {
        Err(CliError::Config { line, msg }) => (line, msg),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn minimal_config_takes_documented_defaults() {
    let cfg = parse("target = warped_gaussian\nkernel = hmc\niterations = 50\nseed = 7\n").unwrap();
    assert_eq!(cfg.target, TargetChoice::WarpedGaussian);
    assert_eq!(cfg.kernel, KernelChoice::Hmc);
    assert_eq!((cfg.iterations, cfg.seed), (50, 7));
    assert_eq!((cfg.dim, cfg.sigma2, cfg.b), (2, 100.0, 0.1));
    assert_eq!(cfg.metric, MetricChoice::Identity);
    assert_eq!(cfg.scheme, Scheme::Leapfrog);
    assert_eq!((cfg.step_size, cfg.t_max, cfg.chains), (0.1, 6.3, 1));
    assert!(!cfg.student_t);
}

#[test]
fn banner_lists_every_key_and_marks_defaults() {
    let cfg = parse("target = iid_gaussian\nseed = 3\n").unwrap();
    let banner = cfg.banner();
    assert_eq!(banner.lines().count(), KEYS.len());
    for (key, _) in KEYS {
        assert!(
            banner.lines().any(|l| l.starts_with(&format!("# {key} "))),
            "{key} missing"
        );
    }
    let seed = banner.lines().find(|l| l.starts_with("# seed ")).unwrap();
    assert!(!seed.ends_with("# default"));
    let step = banner.lines().find(|l| l.starts_with("# step_size ")).unwrap();
    assert!(step.ends_with("# default"));
}

#[test]
fn comments_and_blank_lines_are_ignored() {
    let cfg = parse("# header\n\ntarget = iid_gaussian   # trailing\n  target.dim = 4\n").unwrap();
    assert_eq!(cfg.dim, 4);
}

#[test]
fn negative_step_size_names_the_key() {
    let (line, msg) = config_error("target = iid_gaussian\nstep_size = -0.1\n");
    assert_eq!(line, 2);
    assert!(msg.contains("step_size"), "{msg}");
}

#[test]
fn student_t_needs_nu_above_two() {
    let (line, msg) = config_error("target = iid_gaussian\nkinetic = student_t\nkinetic.nu = 1.5\n");
    assert_eq!(line, 3);
    assert!(msg.contains("kinetic.nu"), "{msg}");
    assert!(parse("target = iid_gaussian\nkinetic = student_t\nkinetic.nu = 2.5\n").is_ok());
}

#[test]
fn unknown_key_reports_its_line() {
    let (line, msg) = config_error("# c\ntarget = iid_gaussian\nstep = 0.1\n");
    assert_eq!(line, 3);
    assert!(msg.contains("step"), "{msg}");
}

#[test]
fn type_mismatch_and_duplicates_are_rejected() {
    assert_eq!(config_error("target = iid_gaussian\niterations = many\n").0, 2);
    assert_eq!(config_error("target = iid_gaussian\nseed = 1\nseed = 2\n").0, 3);
    assert_eq!(config_error("target = iid_gaussian\nkernel = nuts\n").0, 2);
    assert_eq!(config_error("target iid_gaussian\n").0, 1);
    assert_eq!(config_error("target = iid_gaussian\niterations = 0\n").0, 2);
}

#[test]
fn missing_required_keys_are_rejected() {
    assert!(matches!(parse("seed = 1\n"), Err(CliError::Config { .. })));
    assert!(matches!(parse("target = gaussian\n"), Err(CliError::Config { .. })));
    assert!(matches!(
        parse("target = iid_gaussian\nmetric = dense\n"),
        Err(CliError::Config { .. })
    ));
}

#[test]
fn config_errors_exit_with_one() {
    let err = parse("bogus = 1\n").unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert_eq!(CliError::Numeric("nan".into()).exit_code(), 2);
}
