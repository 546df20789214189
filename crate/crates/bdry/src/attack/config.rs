//! Attack configuration and its `key = value` file format.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackMethod {
    Pgd,
    Cw,
    AutoPgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackNorm {
    L2,
    Linf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    /// `2 * eps / max_steps`.
    Adaptive,
    Fixed(f64),
}

/// AutoPGD objective. When no loss is configured, AutoPGD runs both CE and
/// DLR and keeps the closer success.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApgdLoss {
    Ce,
    Dlr,
}

/// Parameters for one attack run.
#[derive(Debug, Clone)]
pub struct AttackConfig {
    pub method: AttackMethod,
    pub norm: AttackNorm,
    /// Ball radii swept smallest-first; the sweep stops at the first radius
    /// that yields an adversarial example. CW ignores these (its L2
    /// objective is unconstrained).
    pub epsilons: Vec<f64>,
    pub max_steps: usize,
    pub step_size: StepSize,
    /// Restricts AutoPGD to a single loss; `None` runs CE and DLR.
    pub loss: Option<ApgdLoss>,
    pub seed: u64,
    /// Input box; every iterate is clamped into `[clip.0, clip.1]`.
    pub clip: (f32, f32),
}

impl AttackConfig {
    /// PGD sweep defaults: the standard-model radii
    /// `36/255, 64/255, 0.3, 0.5, 0.7, 0.9, 1.1` with 100 adaptive steps.
    pub fn pgd_default(seed: u64) -> Self {
        AttackConfig {
            method: AttackMethod::Pgd,
            norm: AttackNorm::L2,
            epsilons: vec![36.0 / 255.0, 64.0 / 255.0, 0.3, 0.5, 0.7, 0.9, 1.1],
            max_steps: 100,
            step_size: StepSize::Adaptive,
            loss: None,
            seed,
            clip: (0.0, 1.0),
        }
    }

    /// CW defaults: 100 steps of size 1e-2.
    pub fn cw_default(seed: u64) -> Self {
        AttackConfig {
            method: AttackMethod::Cw,
            norm: AttackNorm::L2,
            epsilons: vec![1.0],
            max_steps: 100,
            step_size: StepSize::Fixed(1e-2),
            loss: None,
            seed,
            clip: (0.0, 1.0),
        }
    }

    /// AutoPGD defaults: eps 1.1, 100 steps, initial step 2.3e-2.
    pub fn autopgd_default(seed: u64) -> Self {
        AttackConfig {
            method: AttackMethod::AutoPgd,
            norm: AttackNorm::L2,
            epsilons: vec![1.1],
            max_steps: 100,
            step_size: StepSize::Fixed(2.3e-2),
            loss: None,
            seed,
            clip: (0.0, 1.0),
        }
    }

    /// The standard three-stage ensemble: a PGD sweep, then CW, then AutoPGD.
    pub fn default_ensemble(seed: u64) -> Vec<Self> {
        vec![Self::pgd_default(seed), Self::cw_default(seed), Self::autopgd_default(seed)]
    }

    /// Step size for a given radius.
    pub fn step_for(&self, eps: f64) -> f64 {
        match self.step_size {
            StepSize::Adaptive => 2.0 * eps / self.max_steps.max(1) as f64,
            StepSize::Fixed(s) => s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::Config("epsilons must not be empty".into()));
        }
        let mut prev = 0.0;
        for &e in &self.epsilons {
            if e <= prev {
                return Err(Error::Config(format!(
                    "epsilons must be strictly increasing and positive, got {:?}",
                    self.epsilons
                )));
            }
            prev = e;
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be >= 1".into()));
        }
        if let StepSize::Fixed(s) = self.step_size {
            if !(s > 0.0) {
                return Err(Error::Config("step_size must be positive or 'adaptive'".into()));
            }
        }
        if !(self.clip.0 < self.clip.1) {
            return Err(Error::Config("clip_lo must be below clip_hi".into()));
        }
        Ok(())
    }

    /// Parses the plain-text `key = value` attack file format.
    pub fn parse(text: &str, default_seed: u64) -> Result<Self> {
        let mut method = None;
        let mut cfg = AttackConfig::pgd_default(default_seed);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "method" => {
                    method = Some(match value {
                        "pgd" => AttackMethod::Pgd,
                        "cw" => AttackMethod::Cw,
                        "autopgd" => AttackMethod::AutoPgd,
                        other => return Err(Error::Config(format!("unknown method '{other}'"))),
                    })
                }
                "norm" => {
                    cfg.norm = match value {
                        "l2" => AttackNorm::L2,
                        "linf" => AttackNorm::Linf,
                        other => return Err(Error::Config(format!("unknown norm '{other}'"))),
                    }
                }
                "epsilons" => {
                    cfg.epsilons = value
                        .split(',')
                        .map(|s| parse_radius(s.trim()))
                        .collect::<Result<Vec<f64>>>()?;
                }
                "max_steps" => {
                    cfg.max_steps = value
                        .parse()
                        .map_err(|_| Error::Config(format!("bad max_steps '{value}'")))?;
                }
                "step_size" => {
                    cfg.step_size = if value == "adaptive" {
                        StepSize::Adaptive
                    } else {
                        StepSize::Fixed(
                            value
                                .parse()
                                .map_err(|_| Error::Config(format!("bad step_size '{value}'")))?,
                        )
                    };
                }
                "loss" => {
                    cfg.loss = Some(match value {
                        "ce" => ApgdLoss::Ce,
                        "dlr" => ApgdLoss::Dlr,
                        other => return Err(Error::Config(format!("unknown loss '{other}'"))),
                    })
                }
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|_| Error::Config(format!("bad seed '{value}'")))?;
                }
                "clip_lo" => {
                    cfg.clip.0 = value
                        .parse()
                        .map_err(|_| Error::Config(format!("bad clip_lo '{value}'")))?;
                }
                "clip_hi" => {
                    cfg.clip.1 = value
                        .parse()
                        .map_err(|_| Error::Config(format!("bad clip_hi '{value}'")))?;
                }
                other => return Err(Error::Config(format!("unknown key '{other}'"))),
            }
        }
        let method = method.ok_or_else(|| Error::Config("missing required key 'method'".into()))?;
        // Method-specific defaults for fields the file left out.
        let base = match method {
            AttackMethod::Pgd => AttackConfig::pgd_default(default_seed),
            AttackMethod::Cw => AttackConfig::cw_default(default_seed),
            AttackMethod::AutoPgd => AttackConfig::autopgd_default(default_seed),
        };
        cfg.method = method;
        if !text.contains("epsilons") {
            cfg.epsilons = base.epsilons;
        }
        if !text.contains("step_size") {
            cfg.step_size = base.step_size;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Radii may be written as plain floats or fractions like `36/255`.
fn parse_radius(s: &str) -> Result<f64> {
    if let Some((num, den)) = s.split_once('/') {
        let n: f64 = num.trim().parse().map_err(|_| Error::Config(format!("bad radius '{s}'")))?;
        let d: f64 = den.trim().parse().map_err(|_| Error::Config(format!("bad radius '{s}'")))?;
        if d == 0.0 {
            return Err(Error::Config(format!("bad radius '{s}'")));
        }
        return Ok(n / d);
    }
    s.parse().map_err(|_| Error::Config(format!("bad radius '{s}'")))
}
