use lmm_pricer::{parse_config, CliError};
use proptest::prelude::*;

#[allow(clippy::too_many_arguments)]
fn render(
    sigma: f64,
    lambda: f64,
    phi: f64,
    strike: f64,
    technique: &str,
    levels: &[u32],
    steps: &[usize],
    threads: Option<usize>,
    horizon: Option<f64>,
) -> String {
    let join = |v: &[String]| v.join(", ");
    let levels = join(&levels.iter().map(|l| l.to_string()).collect::<Vec<_>>());
    let steps = join(&steps.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    let psi = if technique == "modified" { "psi = 1\n" } else { "" };
    let threads = threads.map(|t| format!("threads = {t}\n")).unwrap_or_default();
    let horizon = horizon.map(|h| format!("horizon = {h}\n")).unwrap_or_default();
    format!(
        "[market]
tenor_dates = 0, 0.5, 1.0, 1.5
forwards = 0.0112, 0.0118, 0.0122
alphas = 0, 0.2366, 0.2145
phis = 0, {phi}, {phi}
sigma = {sigma}
lambda = {lambda}

[product]
kind = swaption
a = 1
b = 3
strike = {strike}

[domain]
f_max = 0.04, 0.05
v_max = 3.5
{horizon}
[solver]
technique = {technique}
levels = {levels}
steps = {steps}
{psi}{threads}
[output]
reference = none
"
    )
}

proptest! {
    #[test]
    fn printed_configs_parse_back(
        sigma in 0.0f64..1.0,
        lambda in 0.0f64..0.5,
        phi in -0.9f64..0.9,
        strike in 0.001f64..0.05,
        technique in prop::sample::select(vec!["full", "sparse", "modified"]),
        levels in prop::collection::vec(2u32..12, 1..5),
        steps in prop::collection::vec(1usize..400, 1..4),
        threads in prop::option::of(1usize..64),
        horizon in prop::option::of(0.01f64..0.5),
    ) {
        let text = render(sigma, lambda, phi, strike, technique, &levels, &steps, threads, horizon);
        let config = parse_config(&text).unwrap();
        prop_assert_eq!(config.market.sigma, sigma);
        prop_assert_eq!(&config.solver.levels, &levels);
        prop_assert_eq!(config.solver.threads, threads);
        prop_assert_eq!(config.domain.horizon, horizon);
        let again = parse_config(&config.to_string()).unwrap();
        prop_assert_eq!(again, config);
    }

    #[test]
    fn unknown_keys_report_their_line(pad in 0usize..6, name in "[a-z]{3,8}_x") {
        let text = format!("{}[market]\n{name} = 1\n", "\n".repeat(pad));
        match parse_config(&text) {
            Err(CliError::Parse { line, message }) => {
                prop_assert_eq!(line, pad + 2);
                prop_assert!(message.contains(&name), "{}", message);
            }
            other => prop_assert!(false, "unexpected {:?}", other),
        }
    }
}
