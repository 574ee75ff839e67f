#![no_main]

use fmhash::db::AccountDb;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(db) = AccountDb::decode(data) {
        assert_eq!(db.encode(), data);
    }
});
