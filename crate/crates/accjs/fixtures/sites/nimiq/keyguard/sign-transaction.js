/* stand-in for https://keyguard.nimiq.com/request/sign-transaction.js */
(function () { self.loaded = (self.loaded || []).concat("https://keyguard.nimiq.com/request/sign-transaction.js"); })();
