use std::ffi::{CStr, CString};
use std::ptr;

use cstirap_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(cstirap_last_error()) }
        .to_string_lossy()
        .into_owned()
}

fn preset(name: &str) -> *mut CstirapScenario {
    let name = CString::new(name).unwrap();
    let mut s = ptr::null_mut();
    let status = unsafe { cstirap_scenario_from_preset(name.as_ptr(), &mut s) };
    assert_eq!(status, CstirapStatus::Ok, "{}", last_error());
    s
}

#[test]
fn simulate_five_level_through_handles() {
    let s = preset("five-level");
    assert_eq!(unsafe { cstirap_scenario_levels(s) }, 5);
    for kv in ["gamma=0", "gamma1=0", "gamma2=0"] {
        let kv = CString::new(kv).unwrap();
        assert_eq!(
            unsafe { cstirap_scenario_set(s, kv.as_ptr()) },
            CstirapStatus::Ok
        );
    }
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { cstirap_simulate(s, &mut r) }, CstirapStatus::Ok);
    let mut eff = 0.0;
    assert_eq!(
        unsafe { cstirap_run_efficiency(r, &mut eff) },
        CstirapStatus::Ok
    );
    assert!(eff > 0.99, "{eff}");

    let n = unsafe { cstirap_run_time_points(r) };
    assert_eq!(unsafe { cstirap_run_levels(r) }, 5);
    let mut times = vec![0.0; n];
    let mut target = vec![0.0; n];
    assert_eq!(
        unsafe { cstirap_run_times(r, times.as_mut_ptr(), n) },
        CstirapStatus::Ok
    );
    assert_eq!(
        unsafe { cstirap_run_population(r, 4, target.as_mut_ptr(), n) },
        CstirapStatus::Ok
    );
    assert!(times.windows(2).all(|w| w[1] > w[0]));
    assert_eq!(*target.last().unwrap(), eff);

    let mut json = ptr::null_mut();
    assert_eq!(
        unsafe { cstirap_run_report_json(r, &mut json) },
        CstirapStatus::Ok
    );
    let text = unsafe { CStr::from_ptr(json) }.to_str().unwrap().to_owned();
    assert!(text.contains("\"efficiency\""));
    unsafe {
        cstirap_string_free(json);
        cstirap_run_free(r);
        cstirap_scenario_free(s);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let bad = CString::new("nope").unwrap();
    let mut s = ptr::null_mut();
    assert_eq!(
        unsafe { cstirap_scenario_from_preset(bad.as_ptr(), &mut s) },
        CstirapStatus::Config
    );
    assert!(s.is_null());
    assert!(last_error().contains("nope"));

    assert_eq!(
        unsafe { cstirap_scenario_from_preset(ptr::null(), &mut s) },
        CstirapStatus::InvalidPointer
    );

    let json = CString::new("{\"preset\": \"rb2-seven\",").unwrap();
    assert_eq!(
        unsafe { cstirap_scenario_from_config(json.as_ptr(), &mut s) },
        CstirapStatus::Config
    );

    let s = preset("rb2-seven");
    let kv = CString::new("system.levels.40.loss_rate=0").unwrap();
    assert_eq!(
        unsafe { cstirap_scenario_set(s, kv.as_ptr()) },
        CstirapStatus::Config
    );
    assert_eq!(unsafe { cstirap_scenario_levels(s) }, 7);

    let tol = CString::new("grid.rel_tol=1e-300").unwrap();
    assert_eq!(
        unsafe { cstirap_scenario_set(s, tol.as_ptr()) },
        CstirapStatus::Ok
    );
    let tol = CString::new("grid.abs_tol=1e-300").unwrap();
    assert_eq!(
        unsafe { cstirap_scenario_set(s, tol.as_ptr()) },
        CstirapStatus::Ok
    );
    let mut r = ptr::null_mut();
    assert_eq!(
        unsafe { cstirap_simulate(s, &mut r) },
        CstirapStatus::Integration
    );
    assert!(r.is_null());

    let mut buf = [0.0; 2];
    assert_eq!(
        unsafe { cstirap_run_times(ptr::null(), buf.as_mut_ptr(), 2) },
        CstirapStatus::InvalidPointer
    );
    unsafe { cstirap_scenario_free(s) };
}

#[test]
fn short_buffers_and_bad_levels_are_rejected() {
    let s = preset("five-level");
    let mut r = ptr::null_mut();
    assert_eq!(unsafe { cstirap_simulate(s, &mut r) }, CstirapStatus::Ok);
    let mut buf = [0.0; 4];
    assert_eq!(
        unsafe { cstirap_run_times(r, buf.as_mut_ptr(), 4) },
        CstirapStatus::OutOfRange
    );
    let n = unsafe { cstirap_run_time_points(r) };
    let mut big = vec![0.0; n];
    assert_eq!(
        unsafe { cstirap_run_population(r, 5, big.as_mut_ptr(), n) },
        CstirapStatus::OutOfRange
    );
    unsafe {
        cstirap_run_free(r);
        cstirap_scenario_free(s);
        cstirap_run_free(ptr::null_mut());
        cstirap_scenario_free(ptr::null_mut());
    }
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(cstirap_version()) }
        .to_str()
        .unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
