//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on failure.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::time::Instant;

use moire::analysis::{width_table, ReportRow, SweepRun};
use moire::cli::{cmd_relax, RunConfig};
use moire::domainwall::{asymptotic_check_window, solve_kink, WallSpec};
use moire::gsfe::{ElasticModuli, GsfeModel, WallPotential};
use moire::lattice::{moire_cell, Basis2, LayerPair, StrainFamily};
use moire::relax::{default_grid, relax, scaling_diagnostic, DisplacementField, EnergyFunctional, RelaxOptions, RelaxResult};
use rand::{rngs::StdRng, Rng, SeedableRng};

struct Gate {
    failures: usize,
}

impl Gate {
    fn report(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        println!("criterion {id:>2} {} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures += 1;
        }
    }
}

fn reference() -> Basis2 {
    Basis2::hexagonal(1.42)
}

fn functional(family: StrainFamily, n: Option<usize>) -> EnergyFunctional {
    let pair = LayerPair::from_family(&family, &reference()).unwrap();
    let n = n.unwrap_or_else(|| {
        let cell = moire_cell(&pair.a1, &pair.a2, 1).unwrap();
        default_grid(&cell, 2.8, 128, 512)
    });
    EnergyFunctional::new(pair, n, GsfeModel::graphene(), ElasticModuli::graphene()).unwrap()
}

fn relaxed(f: &EnergyFunctional) -> RelaxResult {
    relax(f, &RelaxOptions::default()).unwrap()
}

/// Fourth-order central difference of the energy along `d`.
fn directional_fd(f: &EnergyFunctional, x: &[f64], d: &[f64], h: f64) -> f64 {
    let mut scratch = vec![0.0; x.len()];
    let mut at = |s: f64| {
        let y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + s * b).collect();
        f.value_and_gradient(&y, &mut scratch)
    };
    (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h)
}

fn mean_zero_random(n1: usize, n2: usize, amp: f64, rng: &mut StdRng) -> DisplacementField {
    let data = (0..4 * n1 * n2).map(|_| amp * (rng.random::<f64>() - 0.5)).collect();
    let mut u = DisplacementField::from_data(n1, n2, data).unwrap();
    u.project_mean_zero();
    u
}

fn criterion_1(gate: &mut Gate) {
    let families = [
        StrainFamily::Twist { theta: 1f64.to_radians() },
        StrainFamily::Dilation { eps: 0.01 },
        StrainFamily::PureShear { eps: 0.01 },
        StrainFamily::SimpleShear { eps: 0.01 },
    ];
    let mut rng = StdRng::seed_from_u64(20);
    let mut worst = 0.0f64;
    for fam in families {
        let f = functional(fam, Some(16));
        let (n1, n2) = f.shape();
        for _ in 0..20 {
            let u = mean_zero_random(n1, n2, 0.5, &mut rng);
            let d = mean_zero_random(n1, n2, 2.0, &mut rng);
            let mut g = vec![0.0; u.data().len()];
            f.value_and_gradient(u.data(), &mut g);
            let an: f64 = g.iter().zip(d.data()).map(|(a, b)| a * b).sum();
            let fd = directional_fd(&f, u.data(), d.data(), 1e-3);
            worst = worst.max((fd - an).abs() / an.abs());
        }
    }
    gate.report(1, "gradient vs finite differences", worst < 1e-6, format!("max relative error {worst:.2e} over 4 families x 20 fields"));
}

fn criterion_3(gate: &mut Gate) {
    let cases = [
        (WallPotential::quartic(), 2.0, "quartic"),
        (WallPotential::sine_gordon(), 4.0 / PI, "sine-Gordon"),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (u, kappa, name) in cases {
        let sol = solve_kink(&u, 12.0, 2401).unwrap();
        let err = sol
            .t
            .iter()
            .zip(&sol.psi)
            .map(|(&t, &p)| {
                let exact = if name == "quartic" { (0.5 * t).tanh() } else { (4.0 * t.exp().atan() - PI) / PI };
                (p - exact).abs()
            })
            .fold(0.0, f64::max);
        let dk = (sol.kappa - kappa).abs();
        pass &= err < 1e-6 && dk < 1e-4;
        detail.push(format!("{name}: sup error {err:.2e}, |kappa - {kappa:.6}| = {dk:.2e}"));
    }
    gate.report(3, "analytic kinks", pass, detail.join("; "));
}

fn criterion_4(gate: &mut Gate) {
    let spec = WallSpec::with_normal_angle(1, PI / 2.0, &reference(), ElasticModuli::graphene(), &GsfeModel::graphene()).unwrap();
    let sol = solve_kink(&spec.potential, 14.0, 2801).unwrap();
    let defects: Vec<f64> = [10.0, 10.5, 11.0, 11.5, 12.0, 12.5, 13.0]
        .iter()
        .map(|&b| asymptotic_check_window(&sol, 5.0, b).unwrap().max_defect)
        .collect();
    let first = defects[0];
    let growth = defects.iter().cloned().fold(0.0, f64::max) / first;
    let pass = defects.iter().all(|d| d.is_finite()) && growth < 1.1;
    gate.report(
        4,
        "tail defect bounded",
        pass,
        format!("max defect over window end 10..13: {:?}, growth factor {growth:.4}", defects.iter().map(|d| format!("{d:.4}")).collect::<Vec<_>>()),
    );
}

fn criterion_8(gate: &mut Gate) {
    let m = GsfeModel::graphene();
    let (global, _) = m.minimum();
    let z = 2.0 * PI / 3.0;
    let value = m.phi(z, z);
    let g = m.grad_phi(z, z);
    let stationary = g[0].abs().max(g[1].abs()) < 1e-9;
    let pass = stationary && (value - global).abs() < 1e-9 && value.abs() <= 1e-3 && (m.aa_value() - 17.861).abs() < 1e-3;
    gate.report(
        8,
        "GSFE sanity",
        pass,
        format!(
            "phi(2pi/3, 2pi/3) = {value:.3e} meV (global minimum {global:.3e}, |grad| {:.1e}), AA value {:.6} meV",
            g[0].abs().max(g[1].abs()),
            m.aa_value()
        ),
    );
}

fn compare_dirs(a: &Path, b: &Path) -> Result<usize, String> {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let mut csvs = 0;
    for name in names {
        let x = fs::read(a.join(&name)).unwrap();
        let y = fs::read(b.join(&name)).map_err(|e| format!("{name:?}: {e}"))?;
        if x != y {
            return Err(format!("{name:?} differs"));
        }
        if name.to_string_lossy().ends_with(".csv") {
            csvs += 1;
        }
    }
    Ok(csvs)
}

fn criterion_10(gate: &mut Gate) {
    let config = RunConfig::from_toml("[family]\ntwist_deg = [1.0, 0.6]\n[solver]\ngrid = 48\n").unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_relax(&config, a.path(), None, true).unwrap();
    cmd_relax(&config, b.path(), None, true).unwrap();
    match compare_dirs(a.path(), b.path()) {
        Ok(n) => gate.report(10, "deterministic outputs", n >= 3, format!("{n} CSV files byte-identical across two runs")),
        Err(e) => gate.report(10, "deterministic outputs", false, e),
    }
}

fn row<'a>(rows: &'a [ReportRow], family: &str, parameter: f64, triplet: usize) -> &'a ReportRow {
    rows.iter()
        .find(|r| r.family == family && r.parameter == parameter && r.triplet == triplet)
        .expect("row present")
}

fn main() {
    let mut gate = Gate { failures: 0 };
    let start = Instant::now();

    criterion_1(&mut gate);

    let f1 = functional(StrainFamily::Twist { theta: 1f64.to_radians() }, Some(64));
    let r1 = relaxed(&f1);
    let defect = r1.field.antisymmetry_defect();
    gate.report(2, "interlayer antisymmetry", r1.converged && defect < 1e-8, format!("max |u1 + u2| = {defect:.2e} A"));

    criterion_3(&mut gate);
    criterion_4(&mut gate);

    // twist sweep
    let thetas = [0.8, 0.4, 0.2, 0.1];
    let twist: Vec<(f64, EnergyFunctional)> = thetas
        .iter()
        .map(|&d| (d, functional(StrainFamily::Twist { theta: f64::to_radians(d) }, None)))
        .collect();
    let twist_runs: Vec<RelaxResult> = twist.iter().map(|(_, f)| relaxed(f)).collect();
    let shear = StrainFamily::PureShear { eps: 0.0015625 };
    let fs = functional(shear, None);
    let rs = relaxed(&fs);

    let mut sweep: Vec<SweepRun<'_>> = twist
        .iter()
        .zip(&twist_runs)
        .map(|((d, f), r)| SweepRun {
            family: "twist",
            parameter: *d,
            functional: f,
            field: &r.field,
            triplets: vec![1, 2, 3],
        })
        .collect();
    sweep.push(SweepRun {
        family: "pure_shear",
        parameter: 0.0015625,
        functional: &fs,
        field: &rs.field,
        triplets: vec![1, 2, 3],
    });
    let moduli = ElasticModuli::graphene();
    let rows = width_table(&sweep, moduli, &GsfeModel::graphene(), 2.0, None).unwrap();

    let expected = [37.7, 47.4, 48.7, 48.7];
    let mut pass5 = true;
    let mut detail5 = Vec::new();
    for (&d, &e) in thetas.iter().zip(&expected) {
        let l = row(&rows, "twist", d, 1).fwhm;
        let rel = (l - e).abs() / e;
        pass5 &= rel < 0.05;
        detail5.push(format!("{d} deg: {l:.2} A (expected {e}, {:.1}%)", 100.0 * rel));
    }
    let (l01, l02) = (row(&rows, "twist", 0.1, 1).fwhm, row(&rows, "twist", 0.2, 1).fwhm);
    let sat = (l01 - l02).abs() / l02;
    pass5 &= sat < 0.02;
    detail5.push(format!("saturation {:.3}%", 100.0 * sat));
    gate.report(5, "twist wall widths", pass5, detail5.join("; "));

    let l_par = row(&rows, "pure_shear", 0.0015625, 1);
    let l_mixed = row(&rows, "pure_shear", 0.0015625, 2);
    let theory = ((moduli.lambda + 2.0 * moduli.mu) / moduli.mu).sqrt();
    let ratio = l_par.fwhm / l01;
    let e_par = (l_par.fwhm - 76.4).abs() / 76.4;
    let e_mix = (l_mixed.fwhm - 55.1).abs() / 55.1;
    let e_ratio = (ratio - theory).abs() / theory;
    gate.report(
        6,
        "pure-shear wall widths",
        e_par < 0.10 && e_mix < 0.10 && e_ratio < 0.07 && l_par.wall == "tensile" && l_mixed.wall == "mixed",
        format!(
            "L_par {:.2} A ({:.1}% from 76.4), L_pi/3 {:.2} A ({:.1}% from 55.1), L_par/L0 {ratio:.4} vs sqrt((lambda+2mu)/mu) {theory:.4} ({:.2}%); printed theory row 1.571 differs from {theory:.3} by {:.1}%",
            l_par.fwhm,
            100.0 * e_par,
            l_mixed.fwhm,
            100.0 * e_mix,
            100.0 * e_ratio,
            100.0 * (theory - 1.571).abs() / theory
        ),
    );

    let input: Vec<(f64, &EnergyFunctional, &DisplacementField)> = twist
        .iter()
        .zip(&twist_runs)
        .map(|((d, f), r)| (d.to_radians(), f, &r.field))
        .collect();
    let scaling = scaling_diagnostic(&input).unwrap();
    // the bound is stated on the angle-independent reference cell
    let vals: Vec<f64> = scaling.iter().map(|s| s.scaled_reference).collect();
    let cell: Vec<f64> = scaling.iter().map(|s| s.scaled_cell).collect();
    let spread = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min);
    let growth: Vec<String> = scaling.windows(2).map(|w| format!("{:.3}", w[1].norm_reference / w[0].norm_reference)).collect();
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(", ");
    gate.report(
        7,
        "Sobolev scaling",
        spread(&vals) < 1.5,
        format!(
            "2 sin(theta/2) |u|_1,2 on the reference cell = [{}], max/min {:.4}; norm growth per halving [{}]; moire-cell variant [{}], max/min {:.4}",
            fmt(&vals),
            spread(&vals),
            growth.join(", "),
            fmt(&cell),
            spread(&cell)
        ),
    );

    criterion_8(&mut gate);

    let f31 = functional(StrainFamily::Twist { theta: 3.1f64.to_radians() }, None);
    let r31 = relaxed(&f31);
    let mut all = vec![("twist 1", &r1), ("twist 3.1", &r31), ("pure_shear", &rs)];
    all.extend(twist_runs.iter().map(|r| ("twist sweep", r)));
    let lowered = all.iter().all(|(_, r)| r.energy.total < r.unrelaxed.total);
    let misfit = r31.energy.inter < r31.unrelaxed.inter;
    let converged = all.iter().all(|(_, r)| r.converged);
    gate.report(
        9,
        "relaxation lowers energy",
        lowered && misfit && converged,
        format!(
            "{} runs lowered: {lowered}; all converged: {converged}; 3.1 deg misfit {:.4} -> {:.4} meV",
            all.len(),
            r31.unrelaxed.inter,
            r31.energy.inter
        ),
    );

    criterion_10(&mut gate);

    println!("acceptance: {} failure(s), {:.1} s", gate.failures, start.elapsed().as_secs_f64());
    if gate.failures > 0 {
        std::process::exit(1);
    }
}
