//! Runs the nine-scenario suite and prints an ED vs HD table.

use ecodrive::score::{compare_trips, DEFAULT_PROMINENCE};
use ecodrive::sim::run_scenario;
use ecodrive::suite::{nine_scenario_suite, DEFAULT_SUITE_SEED};

fn main() -> ecodrive::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(DEFAULT_SUITE_SEED);
    println!("trip     E_ED[Wh]  E_HD[Wh]  gain[%]  dv[%]  t_ED[s]  t_HD[s]  overspeed  min_gap  hd_min_gap");
    let mut eds_rows = Vec::new();
    for sc in nine_scenario_suite(seed)? {
        let r = run_scenario(&sc)?;
        let cmp = compare_trips(
            &r.eco.trace,
            &r.human.trace,
            &sc.route,
            &sc.vehicle,
            DEFAULT_PROMINENCE,
        )?;
        eds_rows.push((
            sc.name.clone(),
            cmp.eco.eds,
            cmp.human.eds,
            cmp.eco.segments.len(),
            cmp.human.segments.len(),
        ));
        println!(
            "{:<8} {:>8.1}  {:>8.1}  {:>7.2}  {:>5.2}  {:>7.1}  {:>7.1}  {:>9.3}  {:>7}  {:>7}",
            sc.name,
            r.eco.energy_wh,
            r.human.energy_wh,
            r.energy_gain_pct(),
            r.delta_avg_speed_pct(),
            r.eco.trip_time,
            r.human.trip_time,
            r.eco.max_overspeed(),
            r.eco
                .min_gap()
                .map_or("-".to_string(), |g| format!("{g:.2}")),
            r.human
                .min_gap()
                .map_or("-".to_string(), |g| format!("{g:.2}")),
        );
    }
    for (name, e, h, ns_e, ns_h) in eds_rows {
        println!("{name:<8} EDS ED {e:>8.4} ({ns_e} seg)  HD {h:>8.4} ({ns_h} seg)");
    }
    Ok(())
}
