use std::io::{self, Write};

use crate::model::{ConductionState, PlantState};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub il: f64,
    pub vc: f64,
    pub vo: f64,
    pub cond: ConductionState,
    /// High-side duty of the switching period the sample belongs to.
    pub duty: f64,
}

/// Event-sampled waveform record. Times are strictly increasing; a
/// conduction change is stored at the instant it happens.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub samples: Vec<Sample>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn extend(&mut self, other: Trace) {
        for s in other.samples {
            self.push_sample(s);
        }
    }

    fn push_sample(&mut self, s: Sample) {
        match self.samples.last_mut() {
            Some(last) if last.t >= s.t => *last = s,
            _ => self.samples.push(s),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,iL,vC,vo,cond,duty")?;
        for s in &self.samples {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
                s.t,
                s.il,
                s.vc,
                s.vo,
                s.cond.label(),
                s.duty
            )?;
        }
        Ok(())
    }
}

/// Recording buffer used while a cycle runs.
#[derive(Debug)]
pub(crate) struct TraceBuf {
    pub trace: Trace,
    stride: usize,
    counter: usize,
    cycle_start: usize,
}

impl TraceBuf {
    pub fn new(stride: usize) -> Self {
        TraceBuf {
            trace: Trace::default(),
            stride: stride.max(1),
            counter: 0,
            cycle_start: 0,
        }
    }

    pub fn begin_cycle(&mut self) {
        self.cycle_start = self.trace.samples.len().saturating_sub(1);
    }

    /// Always-kept sample (interval edges, events). A sample at the same
    /// instant as the previous one replaces it.
    pub fn mark(&mut self, p: &PlantState, vo: f64) {
        self.trace.push_sample(Sample {
            t: p.t,
            il: p.il,
            vc: p.vc,
            vo,
            cond: p.cond,
            duty: f64::NAN,
        });
    }

    pub fn step(&mut self, p: &PlantState, vo: f64) {
        self.counter += 1;
        if self.counter.is_multiple_of(self.stride) {
            self.mark(p, vo);
        }
    }

    pub fn end_cycle(&mut self, duty: f64) {
        for s in &mut self.trace.samples[self.cycle_start..] {
            s.duty = duty;
        }
    }
}
