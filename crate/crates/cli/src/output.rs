use diffmpc::rl::{EpisodeRecord, TrainHistory};
use diffmpc::ThetaRegistry;
use std::io::{self, Write};

pub const EPISODE_HEADER: &str = "k,x_0,x_1,u,cost";
pub const SUMMARY_HEADER: &str = "episode,B_0,B_1,b_0,b_1,f_0,f_1,f_2,V_0,cost";

/// Floats use the shortest representation that round-trips, so reruns are
/// byte-identical.
fn join(vals: &[f64]) -> String {
    vals.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

pub fn write_episode_csv<W: Write>(w: &mut W, rec: &EpisodeRecord) -> io::Result<()> {
    writeln!(w, "{EPISODE_HEADER}")?;
    for (k, st) in rec.steps.iter().enumerate() {
        let mut vals = st.state.clone();
        vals.extend(&st.action);
        vals.push(st.cost);
        writeln!(w, "{k},{}", join(&vals))?;
    }
    Ok(())
}

/// One row per training episode with the parameters at its end.
pub fn write_summary_csv<W: Write>(w: &mut W, registry: &ThetaRegistry, history: &TrainHistory) -> io::Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    let slice = |name: &str| {
        registry
            .get(name)
            .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, format!("no parameter slice {name}")))
    };
    let order = [slice("B")?, slice("b")?, slice("f")?, slice("V0")?];
    for (i, e) in history.episodes.iter().enumerate() {
        let mut vals = Vec::new();
        for r in &order {
            vals.extend_from_slice(&e.theta[r.clone()]);
        }
        vals.push(e.cost);
        writeln!(w, "{},{}", i + 1, join(&vals))?;
    }
    Ok(())
}
