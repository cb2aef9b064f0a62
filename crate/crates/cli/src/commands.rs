use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use buckbench_core::analysis;
use buckbench_core::engine::SweepTable;
use buckbench_core::{load_step, run_to_steady_state, Config, Error, Metrics, Simulator};

/// Command failure, split by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad arguments, unreadable or invalid configuration, I/O trouble.
    Usage(anyhow::Error),
    /// The numerics did not produce an answer.
    Numerical(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence { .. }
            | Error::ConvergenceFailure { .. }
            | Error::InconsistentState { .. } => Failure::Numerical(e.into()),
            _ => Failure::Usage(e.into()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.into())
    }
}

type CmdResult = Result<(), Failure>;

/// Files staged in memory and published together once every one of them
/// has been produced: each is written to a temporary name and renamed.
struct Outputs {
    dir: PathBuf,
    files: Vec<(&'static str, Vec<u8>)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &'static str, body: Vec<u8>) {
        self.files.push((name, body));
    }

    fn commit(self) -> Result<(), Failure> {
        fs::create_dir_all(&self.dir)
            .with_context(|| format!("cannot create {}", self.dir.display()))
            .map_err(Failure::Usage)?;
        let mut staged = Vec::new();
        for (name, body) in &self.files {
            let tmp = self.dir.join(format!(".{name}.tmp"));
            let res = fs::File::create(&tmp).and_then(|mut f| {
                f.write_all(body)?;
                f.sync_all()
            });
            if let Err(e) = res {
                for (t, _) in &staged {
                    let _ = fs::remove_file(t);
                }
                let _ = fs::remove_file(&tmp);
                return Err(Failure::Usage(
                    anyhow!(e).context(format!("cannot write {}", tmp.display())),
                ));
            }
            staged.push((tmp, self.dir.join(name)));
        }
        for (tmp, dest) in staged {
            fs::rename(&tmp, &dest)
                .with_context(|| format!("cannot write {}", dest.display()))
                .map_err(Failure::Usage)?;
        }
        Ok(())
    }
}

fn load(path: &Path, overrides: &[String]) -> Result<Config, Failure> {
    Ok(Config::load(path, overrides)?)
}

fn csv<F>(f: F) -> Vec<u8>
where
    F: FnOnce(&mut Vec<u8>) -> io::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory cannot fail");
    buf
}

fn print_metrics(m: &Metrics) {
    println!("mode          {}", m.mode);
    println!("Vo_avg        {:.6} V", m.vo_avg);
    println!("Vo_ripple_pp  {:.3} mV", m.vo_ripple_pp * 1e3);
    println!("iL_ripple_pp  {:.4} A", m.il_ripple_pp);
    println!("Ipk           {:.4} A", m.ipk);
    println!("Io_avg        {:.6} A", m.io_avg);
    println!("duty          {:.5}", m.duty);
    println!("efficiency    {:.4}", m.efficiency);
    if !m.periodic {
        println!("window        quasi-periodic over {} periods", m.periods);
    }
}

pub fn analyze(path: &Path, overrides: &[String], out: &Path) -> CmdResult {
    let cfg = load(path, overrides)?;
    let d = cfg.analysis_duty()?;
    let r = analysis::steady_state(&cfg.converter, d)?;
    let t = &r.timing;
    println!("mode   {}", r.mode);
    println!("Vo     {:.6} V", r.vo_avg);
    println!("dIL    {:.6} A", r.d_il);
    println!("Ipk    {:.6} A", r.ipk);
    println!("Io     {:.6} A", r.io);
    println!("K      {:.6}", r.k);
    println!("D      {:.6}", t.d);
    println!("D2     {:.6}", t.d2);
    println!("D3     {:.6}", t.d3);
    println!("Ton    {:.6e} s", t.t_on);
    println!("Toff   {:.6e} s", t.t_off);

    let body = csv(|w| {
        writeln!(w, "key,value")?;
        writeln!(w, "mode,{}", r.mode)?;
        for (k, v) in [
            ("Vo_avg", r.vo_avg),
            ("dIL", r.d_il),
            ("Ipk", r.ipk),
            ("Io", r.io),
            ("K", r.k),
            ("D", t.d),
            ("D2", t.d2),
            ("D3", t.d3),
            ("Ts", t.ts),
            ("TON", t.t_on),
            ("TOFF", t.t_off),
        ] {
            writeln!(w, "{k},{v:.16e}")?;
        }
        Ok(())
    });
    let mut o = Outputs::new(out);
    o.add("analysis.csv", body);
    o.commit()
}

pub fn sim(path: &Path, overrides: &[String], out: &Path) -> CmdResult {
    let cfg = load(path, overrides)?;
    let sim = Simulator::new(&cfg.converter, &cfg.control, &cfg.settings)?;
    if let Some(t_end) = cfg.t_end {
        if !(t_end >= sim.period()) {
            return Err(Error::TEndTooSmall {
                t_end,
                ts: sim.period(),
            }
            .into());
        }
    }
    let run = run_to_steady_state(&sim)?;
    let trace = match cfg.t_end {
        Some(t_end) => sim.simulate(&run.state, t_end)?,
        None => run.trace.clone(),
    };
    print_metrics(&run.metrics);

    let mut o = Outputs::new(out);
    o.add("trace.csv", csv(|w| trace.write_csv(w)));
    o.add("metrics.csv", csv(|w| run.metrics.write_csv(w)));
    o.commit()
}

fn sweep_csv(table: &SweepTable) -> Vec<u8> {
    csv(|w| {
        writeln!(w, "{},Vo_avg,Io_avg,Ipk,efficiency,mode,failed", table.axis)?;
        for row in &table.rows {
            match &row.result {
                Ok(m) => writeln!(
                    w,
                    "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},0",
                    row.value, m.vo_avg, m.io_avg, m.ipk, m.efficiency, m.mode
                )?,
                Err(_) => writeln!(w, "{:.16e},NaN,NaN,NaN,NaN,,1", row.value)?,
            }
        }
        Ok(())
    })
}

pub fn sweep(path: &Path, overrides: &[String], out: &Path) -> CmdResult {
    let cfg = load(path, overrides)?;
    let spec = cfg.sweep.ok_or_else(|| {
        Failure::Usage(anyhow!("no sweep declared: set [sim] sweep = \"io\" or \"vi\""))
    })?;
    // Surface configuration errors once instead of on every row.
    Simulator::new(&cfg.converter, &cfg.control, &cfg.settings)?;
    let values = spec.values();
    let table = buckbench_core::sweep(
        &cfg.converter,
        &cfg.control,
        &cfg.settings,
        spec.axis,
        &values,
    );
    let failed = table.rows.iter().filter(|r| r.result.is_err()).count();
    for row in &table.rows {
        match &row.result {
            Ok(m) => println!(
                "{} = {:.6e}  Vo_avg = {:.6} V  efficiency = {:.4}  {}",
                table.axis, row.value, m.vo_avg, m.efficiency, m.mode
            ),
            Err(e) => println!("{} = {:.6e}  failed: {e}", table.axis, row.value),
        }
    }
    if let Some(lr) = table.line_regulation {
        println!("line regulation {:.4} mV/V", lr * 1e3);
    }
    if failed > 0 {
        println!("{failed} of {} points failed", table.rows.len());
    }
    let mut o = Outputs::new(out);
    o.add("sweep.csv", sweep_csv(&table));
    o.commit()
}

pub fn step(path: &Path, overrides: &[String], out: &Path) -> CmdResult {
    let cfg = load(path, overrides)?;
    let s = cfg.step;
    let r = load_step(
        &cfg.converter,
        &cfg.control,
        &cfg.settings,
        s.from,
        s.to,
        s.ramp,
    )?;
    print_metrics(&r.metrics);
    if let Some(t) = r.metrics.settle_time {
        println!("settle_time   {:.3} us", t * 1e6);
    }
    match r.metrics.load_regulation {
        Some(lr) => println!("load_reg      {:.4} mV/A", lr * 1e3),
        None => println!("load_reg      undefined (no load change)"),
    }
    let mut o = Outputs::new(out);
    o.add("step.csv", csv(|w| r.trace.write_csv(w)));
    o.add("metrics.csv", csv(|w| r.metrics.write_csv(w)));
    o.commit()
}
