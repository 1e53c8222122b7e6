#![allow(dead_code)]

use parfit_cli::ModelConfig;

pub fn exponential(init: f64, upper: f64) -> ModelConfig {
    ModelConfig::from_toml(&format!(
        r#"
[[observables]]
name = "x"
lower = 0.0
upper = {upper:?}

[[parameters]]
name = "alpha"
init = {init:?}
step = 0.01
lower = -10.0
upper = 10.0

[pdf]
type = "exponential"
name = "exppdf"
observable = "x"
alpha = "alpha"
"#
    ))
    .unwrap()
}

pub fn uniform(lower: f64, upper: f64) -> ModelConfig {
    ModelConfig::from_toml(&format!(
        r#"
[[observables]]
name = "x"
lower = {lower:?}
upper = {upper:?}

[[parameters]]
name = "c"
init = 1.0
step = 0.1
lower = 0.5
upper = 2.0
fixed = true

[pdf]
type = "polynomial"
name = "flat"
observable = "x"
coefficients = ["c"]
"#
    ))
    .unwrap()
}

pub fn gaussian(mean: f64, sigma: f64) -> ModelConfig {
    ModelConfig::from_toml(&format!(
        r#"
[[observables]]
name = "x"
lower = -5.0
upper = 5.0

[[parameters]]
name = "mu"
init = {mean:?}
step = 0.01
lower = -3.0
upper = 3.0

[[parameters]]
name = "sigma"
init = {sigma:?}
step = 0.01
lower = 0.05
upper = 3.0

[pdf]
type = "gaussian"
name = "g"
observable = "x"
mean = "mu"
sigma = "sigma"
"#
    ))
    .unwrap()
}

pub fn product(ax: f64, ay: f64) -> ModelConfig {
    ModelConfig::from_toml(&format!(
        r#"
[[observables]]
name = "x"
lower = 0.0
upper = 5.0

[[observables]]
name = "y"
lower = 0.0
upper = 5.0

[[parameters]]
name = "ax"
init = {ax:?}
step = 0.01
lower = -10.0
upper = 10.0

[[parameters]]
name = "ay"
init = {ay:?}
step = 0.01
lower = -10.0
upper = 10.0

[pdf]
type = "product"
name = "xy"

[[pdf.children]]
type = "exponential"
name = "ex"
observable = "x"
alpha = "ax"

[[pdf.children]]
type = "exponential"
name = "ey"
observable = "y"
alpha = "ay"
"#
    ))
    .unwrap()
}

/// Breit-Wigner smeared by a Gaussian of fixed zero mean, binned.
pub fn voigt(mass: f64, width: f64, sigma: f64, bins: usize) -> ModelConfig {
    ModelConfig::from_toml(&format!(
        r#"
metric = "chi2"

[[observables]]
name = "m"
lower = 0.5
upper = 1.5
bins = {bins}

[[parameters]]
name = "mass"
init = {mass:?}
step = 0.001
lower = 0.8
upper = 1.2

[[parameters]]
name = "width"
init = {width:?}
step = 0.001
lower = 0.01
upper = 0.5

[[parameters]]
name = "res_mean"
init = 0.0
step = 0.001
lower = -0.1
upper = 0.1
fixed = true

[[parameters]]
name = "res_sigma"
init = {sigma:?}
step = 0.001
lower = 0.001
upper = 0.2

[pdf]
type = "convolution"
name = "voigt"

[pdf.model]
type = "breit_wigner"
name = "bw"
observable = "m"
mass = "mass"
width = "width"

[pdf.resolution]
type = "gaussian"
name = "res"
observable = "m"
mean = "res_mean"
sigma = "res_sigma"
"#
    ))
    .unwrap()
}

pub fn set_init(config: &mut ModelConfig, name: &str, value: f64) {
    config
        .parameters
        .iter_mut()
        .find(|p| p.name == name)
        .unwrap_or_else(|| panic!("no parameter {name}"))
        .init = value;
}
