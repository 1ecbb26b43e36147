use std::path::Path;

use medipipe_service::ServiceConfig;

use crate::{CliError, ServeArgs};

pub fn run(args: ServeArgs) -> Result<(), CliError> {
    let mut cfg = ServiceConfig::load(args.config.as_deref())?;
    if let Some(addr) = args.listen {
        cfg.listen_addr = addr;
    }
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError::write(Path::new("<runtime>"), e))?;
    rt.block_on(async {
        let (listener, state) = medipipe_service::bind(&cfg).await?;
        let addr = listener.local_addr().map_err(|e| CliError::write(Path::new("<listener>"), e))?;
        // Tests and scripts read this line to find an ephemeral port.
        eprintln!("listening on {addr}");
        medipipe_service::run(listener, state, &cfg, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| CliError::write(Path::new("<listener>"), e))
    })
}
