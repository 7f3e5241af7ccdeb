//! Scratch probe for tuning suite configurations (temporary).

use podt::behaviors::BehaviorKind;
use podt::engine::{AttackerFractions, Scheme, SimConfig, Simulation};

fn representative(res: &podt::engine::RunResult, kind: BehaviorKind) -> Option<u32> {
    let mut best: Option<(u32, u32, u32)> = None; // (first_cycle, neg_events, id)
    for u in res.ground_truth_of(kind) {
        let s = res.creation_stats[u as usize];
        if let Some(fc) = s.first_cycle {
            let key = (fc, u32::MAX - s.events, u);
            if best.map_or(true, |b| key < b) {
                best = Some(key);
            }
        }
    }
    best.map(|(_, _, u)| u)
}

fn fig6_probe(seed: u64) {
    let cfg = SimConfig {
        fractions: AttackerFractions {
            ordinary: 0.1,
            normal_dmb: 0.1,
            intensive_dmb: 0.1,
        },
        k_gen: 1,
        k_val: 5,
        rng_seed: seed,
        trace_trust: true,
        ..SimConfig::default()
    };
    let res = Simulation::run(cfg).unwrap();
    let t = res.traces.as_ref().unwrap();
    for kind in [
        BehaviorKind::Ordinary,
        BehaviorKind::NormalDmb,
        BehaviorKind::IntensiveDmb,
    ] {
        let Some(u) = representative(&res, kind) else {
            println!("fig6 seed {seed} {kind:?}: no active attacker");
            continue;
        };
        let stats = res.creation_stats[u as usize];
        let ord_ok = (20..res.metrics.summary.cycles as usize)
            .all(|c| t.global_trust(c, u) < 0.5);
        let dmb_ok = (11..res.metrics.summary.cycles as usize)
            .all(|c| t.global_trust(c, u) >= 0.5);
        println!(
            "fig6 seed {seed} {kind:?}: user {u} first={:?} events={} gt@199={:.3} ord_ok={ord_ok} dmb_ok={dmb_ok}",
            stats.first_cycle,
            stats.events,
            t.global_trust(199, u)
        );
    }
}

fn fig7_probe(seed: u64, n: u32) {
    let cfg = SimConfig {
        n_users: n,
        kill_chain_count: 2,
        fractions: AttackerFractions {
            ordinary: 0.0,
            normal_dmb: 1.0 / n as f64,
            intensive_dmb: 1.0 / n as f64,
        },
        k_gen: 1,
        k_val: 5,
        rng_seed: seed,
        trace_trust: true,
        calibration_cycles: 200, // keep DBP out of the local-trust picture
        ..SimConfig::default()
    };
    let res = Simulation::run(cfg).unwrap();
    let t = res.traces.as_ref().unwrap();
    let cycles = res.metrics.summary.cycles as usize;
    for kind in [BehaviorKind::NormalDmb, BehaviorKind::IntensiveDmb] {
        let Some(u) = representative(&res, kind) else {
            println!("fig7 seed {seed} {kind:?}: never selected");
            continue;
        };
        let mut norm_ok = true;
        let mut intens_ok = true;
        for (k, _) in t.kill_chains.iter().enumerate() {
            for c in 0..cycles {
                let lt = t.kill_local_trust(c, k, u);
                if c >= 20 && lt >= 0.5 {
                    norm_ok = false;
                }
                if c >= 11 && lt < 0.5 {
                    intens_ok = false;
                }
            }
        }
        let last: Vec<f64> = (0..t.kill_chains.len())
            .map(|k| t.kill_local_trust(cycles - 1, k, u))
            .collect();
        println!(
            "fig7 seed {seed} n {n} {kind:?}: user {u} events={} lt_final={last:?} norm_ok={norm_ok} intens_ok={intens_ok}",
            res.creation_stats[u as usize].events
        );
    }
}

fn fig8_probe(n: u32, seeds: std::ops::Range<u64>) {
    for seed in seeds {
        let base = SimConfig {
            n_users: n,
            fractions: AttackerFractions {
                normal_dmb: 0.3,
                ..Default::default()
            },
            k_gen: 1,
            k_val: 5,
            rng_seed: seed,
            ..SimConfig::default()
        };
        let baseline = Simulation::run(SimConfig {
            scheme: Scheme::Baseline,
            ..base.clone()
        })
        .unwrap();
        let disc = Simulation::run(SimConfig {
            scheme: Scheme::DiscTrustOnly,
            ..base
        })
        .unwrap();
        let b = baseline.metrics.cumulative_malicious(199);
        let d = disc.metrics.cumulative_malicious(199);
        println!(
            "fig8 n {n} seed {seed}: baseline={b} disctrust={d} ratio={:.3}",
            d as f64 / b.max(1) as f64
        );
    }
}

fn fig9_probe(n: u32, calibration: u32, seeds: std::ops::Range<u64>) {
    for seed in seeds {
        let base = SimConfig {
            n_users: n,
            fractions: AttackerFractions {
                intensive_dmb: 0.3,
                ..Default::default()
            },
            k_gen: 1,
            k_val: 5,
            calibration_cycles: calibration,
            rng_seed: seed,
            ..SimConfig::default()
        };
        let podt = Simulation::run(SimConfig {
            scheme: Scheme::PoDT,
            ..base.clone()
        })
        .unwrap();
        let disc = Simulation::run(SimConfig {
            scheme: Scheme::DiscTrustOnly,
            ..base
        })
        .unwrap();
        let p = podt.metrics.cumulative_malicious(199);
        let d = disc.metrics.cumulative_malicious(199);
        println!(
            "fig9 n {n} cal {calibration} seed {seed}: podt={p} disc={d} ratio={:.3} detect={:.2} fallback={}",
            p as f64 / d.max(1) as f64,
            podt.metrics.summary.detection_rate,
            podt.audit.soft_margin_fallback,
        );
    }
}

fn fig12_probe(n: u32, cycles: u32, calibration: u32, pct: f64, seed: u64) {
    let cfg = SimConfig {
        n_users: n,
        cycles,
        calibration_cycles: calibration,
        fractions: AttackerFractions {
            intensive_dmb: pct,
            ..Default::default()
        },
        k_gen: 1,
        k_val: 5,
        rng_seed: seed,
        ..SimConfig::default()
    };
    let started = std::time::Instant::now();
    let res = Simulation::run(cfg).unwrap();
    println!(
        "fig12 n {n} cycles {cycles} cal {calibration} pct {pct} seed {seed}: detect={:.3} ({} of {}) wall={:.1}s",
        res.metrics.summary.detection_rate,
        res.metrics.summary.detected_intensive,
        res.metrics.summary.ground_truth_intensive,
        started.elapsed().as_secs_f64()
    );
}

fn fig10_probe(seeds: std::ops::Range<u64>) {
    for seed in seeds {
        let base = SimConfig {
            n_users: 20,
            fractions: AttackerFractions {
                normal_dmb: 0.3,
                ..Default::default()
            },
            k_gen: 1,
            k_val: 5,
            calibration_cycles: 60,
            rng_seed: seed,
            ..SimConfig::default()
        };
        let podt = Simulation::run(SimConfig {
            scheme: Scheme::PoDT,
            ..base.clone()
        })
        .unwrap();
        let baseline = Simulation::run(SimConfig {
            scheme: Scheme::Baseline,
            ..base
        })
        .unwrap();
        println!(
            "fig10 seed {seed}: podt_tail={:.4} baseline_tail={:.4}",
            podt.metrics.mean_tail_attack_ratio(50),
            baseline.metrics.mean_tail_attack_ratio(50)
        );
    }
}

fn fig11_probe(seeds: std::ops::Range<u64>) {
    for seed in seeds {
        let base = SimConfig {
            n_users: 20,
            fractions: AttackerFractions {
                intensive_dmb: 0.3,
                ..Default::default()
            },
            k_gen: 1,
            k_val: 5,
            calibration_cycles: 60,
            rng_seed: seed,
            ..SimConfig::default()
        };
        let podt = Simulation::run(SimConfig {
            scheme: Scheme::PoDT,
            ..base.clone()
        })
        .unwrap();
        let disc = Simulation::run(SimConfig {
            scheme: Scheme::DiscTrustOnly,
            ..base
        })
        .unwrap();
        println!(
            "fig11 seed {seed}: podt_tail={:.4} disc_tail={:.4}",
            podt.metrics.mean_tail_attack_ratio(50),
            disc.metrics.mean_tail_attack_ratio(50)
        );
    }
}

fn fig13_probe(n: u32, cycles: u32, cal: u32, seed: u64) {
    println!("fig13 n {n} cycles {cycles} seed {seed}");
    for pct in [10u32, 20, 30, 40, 50, 60, 70] {
        let f = pct as f64 / 100.0 / 3.0;
        let base = SimConfig {
            n_users: n,
            cycles,
            calibration_cycles: cal,
            fractions: AttackerFractions {
                ordinary: f,
                normal_dmb: f,
                intensive_dmb: f,
            },
            k_gen: 1,
            k_val: 11,
            rng_seed: seed,
            ..SimConfig::default()
        };
        let mut row = format!("  pct {pct}: ");
        for scheme in [Scheme::PoDT, Scheme::AllMiners, Scheme::RandomMiners] {
            let res = Simulation::run(SimConfig {
                scheme,
                ..base.clone()
            })
            .unwrap();
            row.push_str(&format!(
                "{}={:.4} ",
                scheme.name(),
                res.metrics.summary.accuracy
            ));
        }
        println!("{row}");
    }
}

fn fig14_16_probe(n: u32, seed: u64) {
    let base = SimConfig {
        n_users: n,
        cycles: 200,
        fractions: AttackerFractions {
            ordinary: 0.05,
            normal_dmb: 0.05,
            intensive_dmb: 0.05,
        },
        k_gen: 1,
        k_val: 5,
        calibration_cycles: 50,
        rng_seed: seed,
        ..SimConfig::default()
    };
    for scheme in [Scheme::PoDT, Scheme::AllMiners, Scheme::RandomMiners] {
        let res = Simulation::run(SimConfig {
            scheme,
            ..base.clone()
        })
        .unwrap();
        let s = &res.metrics.summary;
        let min_chain = res.audit.min_chain_size;
        println!(
            "fig14-16 n {n} {}: overload={} storage_mb={} wall_ms/cycle={:.3} accepted={} min_chain={min_chain}",
            scheme.name(),
            s.network_overload,
            s.storage_volume_mb,
            s.mean_cycle_wall_ms,
            s.blocks_accepted
        );
    }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let which = args.get(1).map(String::as_str).unwrap_or("all");
    match which {
        "fig6" => {
            for seed in 1..6 {
                fig6_probe(seed);
            }
        }
        "fig7" => {
            for n in [16] {
                for seed in 1..25 {
                    fig7_probe(seed, n);
                }
            }
        }
        "fig8" => {
            for n in [20, 24, 30] {
                fig8_probe(n, 1..9);
            }
        }
        "fig9" => {
            for (n, cal) in [(20, 60), (20, 80), (30, 100)] {
                fig9_probe(n, cal, 1..6);
            }
        }
        "fig12" => {
            for pct in [0.1, 0.3, 0.5] {
                for seed in 1..4 {
                    fig12_probe(1000, 8000, 4000, pct, seed);
                }
            }
        }
        "fig10" => fig10_probe(1..9),
        "fig11" => fig11_probe(1..9),
        "fig13" => {
            for seed in 1..4 {
                fig13_probe(60, 400, 100, seed);
            }
        }
        "fig1416" => {
            for n in [1000, 5000] {
                fig14_16_probe(n, 1);
            }
        }
        _ => println!("usage: probe fig6|fig7|fig8|fig9|fig10|fig11|fig12|fig13|fig1416"),
    }
}
