//! Produces the same reports as the `srcurv` binary from library code.
//!
//! Run with `cargo run --release --example json_report`.

use sr_curvature::report::{cmd_classify, cmd_lq, cmd_ricci, Format, RunConfig};

fn main() -> sr_curvature::Result<()> {
    let cfg = RunConfig { model: "contact3d:1".into(), samples: 2, seed: 5, ..Default::default() };
    let ricci = cmd_ricci(&cfg)?;
    println!("{}", ricci.render(Format::Csv));

    let census = cmd_classify(&RunConfig { model: "martinet".into(), samples: 32, ..Default::default() })?;
    println!("{}", serde_json::to_string_pretty(&census.document["results"]["census"]).unwrap());

    let lq = cmd_lq(&RunConfig { diagram: vec![1, 1], q: vec![4.0, 0.0], ..Default::default() })?;
    print!("{}", lq.render(Format::Json));
    Ok(())
}
