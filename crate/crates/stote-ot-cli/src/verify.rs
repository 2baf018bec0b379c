//! Invariant batteries behind `stote-ot verify`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use stote_ot::random::{random_channel, random_density, random_unitary};
use stote_ot::stote::{channel_apply, invert_stote, make_stote, DensityMatrix, JamiolkowskiMatrix};
use stote_ot::Error;
use stote_ot::transport::{
    commuting_cost, commuting_k_infinity, cost_of_plan, embedded_cost, k_infinity, pure_pair, transport_cost,
    ui_cost_forms, unitary_invariant_k, SdpOptions,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Core,
    Sdp,
    Limits,
}

#[derive(Debug, Serialize)]
pub struct Property {
    pub name: &'static str,
    pub samples: usize,
    pub worst: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Serialize)]
pub struct LimitRow {
    pub d: usize,
    pub embedded_cost: f64,
    pub k_infinity: f64,
    pub gap: f64,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub suite: &'static str,
    pub seed: u64,
    pub tol: f64,
    pub passed: bool,
    pub properties: Vec<Property>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub limit_table: Vec<LimitRow>,
}

/// Running worst deviation; a failed computation counts as infinite.
struct Tally {
    name: &'static str,
    threshold: f64,
    samples: usize,
    worst: f64,
}

impl Tally {
    fn new(name: &'static str, threshold: f64) -> Self {
        Self {
            name,
            threshold,
            samples: 0,
            worst: 0.0,
        }
    }

    fn record(&mut self, dev: stote_ot::Result<f64>) {
        self.samples += 1;
        let dev = dev.map_or(f64::INFINITY, f64::abs);
        self.worst = if dev.is_nan() { f64::INFINITY } else { self.worst.max(dev) };
    }

    fn finish(self) -> Property {
        Property {
            name: self.name,
            samples: self.samples,
            worst: self.worst,
            threshold: self.threshold,
            passed: self.worst <= self.threshold,
        }
    }
}

fn probs(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..d).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / s).collect()
}

fn core(rng: &mut ChaCha8Rng) -> Vec<Property> {
    let mut roundtrip = Tally::new("stote_roundtrip", 1e-8);
    let mut marginals = Tally::new("stote_marginals", 1e-10);
    let mut forms = Tally::new("ui_cost_forms", 1e-10);
    let mut identity = Tally::new("identity_cost_law", 1e-10);
    for i in 0..60 {
        let d = 2 + i % 3;
        let rho = random_density(d, rng);
        let j = random_channel(d, d, rng.random_range(1..=d * d), rng);
        roundtrip.record((|| {
            let q = make_stote(&rho, &j)?;
            let inv = invert_stote(q.matrix(), j.dims())?;
            let again = make_stote(&inv.rho, &inv.jamiolkowski()?)?;
            Ok((&**again.matrix() - &**q.matrix()).frobenius_norm())
        })());
        marginals.record((|| {
            let q = make_stote(&rho, &j)?;
            let out = channel_apply(&j, rho.matrix())?;
            let a = q.initial_state().sub(rho.matrix()).max_abs();
            let b = q.final_state().sub(&out).max_abs();
            Ok(a.max(b))
        })());
        forms.record(ui_cost_forms(&rho, &j).map(|f| f.max_deviation()));
        identity.record(cost_of_plan(&unitary_invariant_k(d, false), &rho, &JamiolkowskiMatrix::identity(d)));
    }
    vec![roundtrip.finish(), marginals.finish(), forms.finish(), identity.finish()]
}

fn sdp(rng: &mut ChaCha8Rng, opts: SdpOptions) -> Vec<Property> {
    let mut pure = Tally::new("pure_state_closed_form", 1e-5);
    let mut commuting = Tally::new("commuting_closed_form", 1e-5);
    let mut duality = Tally::new("duality_gap", 1e-5);
    let mut invariance = Tally::new("unitary_invariance", 1e-5);
    for d in 2..=3 {
        let k0 = unitary_invariant_k(d, false);
        for i in 0..=10 {
            let alpha = i as f64 / 10.0;
            let res = pure_pair(alpha, d).and_then(|(r, s)| transport_cost(&k0, &r, &s, opts)?.require_solved());
            let want = (1.0 - alpha) * (d as f64 + 2.0 * alpha);
            pure.record(res.as_ref().map(|r| r.value - want).map_err(|e| Error::InvalidArgument(e.to_string())));
            duality.record(res.map(|r| r.value - r.dual_value));
        }
        let k = unitary_invariant_k(d, true);
        for _ in 0..10 {
            let (p, q) = (probs(d, rng), probs(d, rng));
            let mut gap = None;
            commuting.record((|| {
                let r = transport_cost(&k, &DensityMatrix::from_diag(&p)?, &DensityMatrix::from_diag(&q)?, opts)?
                    .require_solved()?;
                gap = Some(r.value - r.dual_value);
                Ok(r.value - commuting_cost(&p, &q)?.value)
            })());
            duality.record(gap.ok_or_else(|| Error::InvalidArgument("unsolved".into())));

            let rho = random_density(d, rng);
            let sigma = random_density(d, rng);
            let u = random_unitary(d, rng);
            invariance.record((|| {
                let base = transport_cost(&k, &rho, &sigma, opts)?.require_solved()?.value;
                let turned = transport_cost(&k, &rho.conjugate_by(&u)?, &sigma.conjugate_by(&u)?, opts)?;
                Ok(base - turned.require_solved()?.value)
            })());
        }
    }
    vec![pure.finish(), commuting.finish(), duality.finish(), invariance.finish()]
}

const EMBED_DIMS: [usize; 6] = [2, 4, 8, 16, 32, 64];

fn limits(rng: &mut ChaCha8Rng, opts: SdpOptions) -> (Vec<Property>, Vec<LimitRow>) {
    let mut closed = Tally::new("k_infinity_commuting", 1e-5);
    let mut embed = Tally::new("embedding_d64_vs_limit", 0.02);
    for _ in 0..10 {
        let (p, q) = (probs(2, rng), probs(2, rng));
        let mut limit = None;
        closed.record((|| {
            let l = k_infinity(&DensityMatrix::from_diag(&p)?, &DensityMatrix::from_diag(&q)?, opts)?;
            limit = Some(l);
            Ok(l - commuting_k_infinity(&p, &q)?)
        })());
        embed.record((|| {
            let l = limit.ok_or_else(|| Error::InvalidArgument("limit unavailable".into()))?;
            Ok(embedded_cost(&DensityMatrix::from_diag(&p)?, &DensityMatrix::from_diag(&q)?, 64, opts)? - l)
        })());
    }
    let table = limit_table(&[0.7, 0.3], &[0.2, 0.8], opts).unwrap_or_default();
    (vec![closed.finish(), embed.finish()], table)
}

fn limit_table(p: &[f64], q: &[f64], opts: SdpOptions) -> stote_ot::Result<Vec<LimitRow>> {
    let rho = DensityMatrix::from_diag(p)?;
    let sigma = DensityMatrix::from_diag(q)?;
    let limit = k_infinity(&rho, &sigma, opts)?;
    EMBED_DIMS
        .iter()
        .map(|&d| {
            let value = embedded_cost(&rho, &sigma, d, opts)?;
            Ok(LimitRow {
                d,
                embedded_cost: value,
                k_infinity: limit,
                gap: value - limit,
            })
        })
        .collect()
}

pub fn run(suite: Suite, seed: u64, opts: SdpOptions) -> Report {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (name, properties, limit_table) = match suite {
        Suite::Core => ("core", core(&mut rng), Vec::new()),
        Suite::Sdp => ("sdp", sdp(&mut rng, opts), Vec::new()),
        Suite::Limits => {
            let (props, table) = limits(&mut rng, opts);
            ("limits", props, table)
        }
    };
    Report {
        suite: name,
        seed,
        tol: opts.tol,
        passed: properties.iter().all(|p| p.passed),
        properties,
        limit_table,
    }
}

impl Report {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for p in &self.properties {
            s.push_str(&format!(
                "{} {:<26} samples {:>3}  worst {:.3e}  threshold {:.0e}\n",
                if p.passed { "PASS" } else { "FAIL" },
                p.name,
                p.samples,
                p.worst,
                p.threshold
            ));
        }
        if !self.limit_table.is_empty() {
            s.push_str("     d  embedded_cost       k_infinity          gap\n");
            for r in &self.limit_table {
                s.push_str(&format!(
                    "{:>6}  {:<18.12} {:<18.12} {:+.3e}\n",
                    r.d, r.embedded_cost, r.k_infinity, r.gap
                ));
            }
        }
        s.push_str(&format!("suite {}: {}\n", self.suite, if self.passed { "passed" } else { "FAILED" }));
        s
    }
}
