//! Proof worker: speaks length-prefixed frames on its standard streams.

use anyhow::bail;
use sprover::stm::ProverWorker;
use sprover::taskqueue::worker_main;

fn main() -> anyhow::Result<()> {
    match std::env::args().nth(1).as_deref() {
        Some("stdio") => {
            worker_main(std::io::stdin().lock(), std::io::stdout().lock(), ProverWorker::new())?;
            Ok(())
        }
        _ => bail!("usage: sprover-worker stdio"),
    }
}
