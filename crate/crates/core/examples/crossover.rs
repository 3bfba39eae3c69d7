//! Finds the message size beyond which SMP's model beats NAP's.

use napcoll::costmodel::{model_nap, model_smp, nap_smp_crossover};
use napcoll::CostParams;

fn main() -> napcoll::Result<()> {
    let params = CostParams::ILLUSTRATIVE;
    let (p, ppn) = (32_768, 16);
    for s in [8.0, 512.0, 4096.0, 65536.0] {
        println!(
            "s = {s:>7} B: nap {:.3e} s, smp {:.3e} s",
            model_nap(p, ppn, s, &params)?,
            model_smp(p, ppn, s, &params)?
        );
    }
    match nap_smp_crossover(p, ppn, 8.0, 1e9, &params)? {
        Some(s) => println!("crossover near {s:.0} bytes"),
        None => println!("NAP stays cheaper up to 1 GB"),
    }

    // A faster injection rate leaves NAP ahead at every size.
    let fast_nic = CostParams {
        r_n: 12e9,
        ..params
    };
    println!(
        "with R_N = 12e9: {:?}",
        nap_smp_crossover(p, ppn, 8.0, 1e9, &fast_nic)?
    );
    Ok(())
}
